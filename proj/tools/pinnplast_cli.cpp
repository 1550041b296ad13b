#include "pinnplast/cli.hpp"

int main(int argc, char** argv) { return pinnplast::run_cli(argc, argv); }
