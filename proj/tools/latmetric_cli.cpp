#include "latmetric/cli.hpp"

int main(int argc, char** argv) { return latmetric::parse_and_dispatch(argc, argv); }
