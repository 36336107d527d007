#include <exception>
#include <iostream>

#include "pairsim_app.hpp"

int main(int argc, char** argv)
{
    try {
        return pairsim::app::run(argc, argv, std::cout, std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 1;
    }
}
