#include "condgp/cli.hpp"

int main(int argc, char** argv) { return condgp::parse_and_dispatch(argc, argv); }
