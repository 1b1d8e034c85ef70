#include "siggpde/cli.hpp"

int main(int argc, char** argv) { return siggpde::run_command(argc, argv); }
