#include "contnet/cli.hpp"

int main(int argc, char** argv) { return contnet::run_cli(argc, argv); }
