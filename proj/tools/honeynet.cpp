#include "honeynet/cli.hpp"

int main(int argc, char** argv) { return honeynet::run_cli(argc, argv); }
