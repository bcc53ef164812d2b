// Writes a planted-signal dataset to a directory for command-line tests.

#include <iostream>

#include "fixture.hpp"

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: make_fixture DIR\n";
        return 2;
    }
    mmf::fixture::write_planted(argv[1]);
    return 0;
}
