#include "splat/runner.hpp"

int main(int argc, char** argv) { return splat::run_cli(argc, argv); }
