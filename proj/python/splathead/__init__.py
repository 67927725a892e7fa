from ._core import gradcheck, read_feature_file, read_image_dump, run
from ._core import __version__

__all__ = ["__version__", "gradcheck", "read_feature_file", "read_image_dump", "run"]
