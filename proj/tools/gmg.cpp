#include "gmg/cli.hpp"

int main(int argc, char** argv) { return gmg::run_cli(argc, argv); }
