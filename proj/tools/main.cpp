#include "mobonet/cli.hpp"

int main(int argc, char** argv) { return mobo::run_cli(argc, argv); }
