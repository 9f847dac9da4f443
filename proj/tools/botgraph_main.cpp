#include "botgraph/cli.hpp"

int main(int argc, char** argv) { return botgraph::run_cli(argc, argv); }
