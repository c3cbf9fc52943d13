#include "loadcast/cli.hpp"

int main(int argc, char** argv) { return loadcast::run_cli(argc, argv); }
