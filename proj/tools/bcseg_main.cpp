#include "bcseg/cli.hpp"

int main(int argc, char** argv) {
    return bcseg::cli_dispatch(argc, argv);
}
