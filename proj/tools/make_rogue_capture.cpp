#include <iostream>

#include "gridwatch/gim.hpp"
#include "gridwatch/harness.hpp"
#include "gridwatch/pcap.hpp"

// Regenerates the bundled rogue endpoint capture: make_rogue_capture <gim> <out.pcap>
int main(int argc, char** argv) {
    if (argc != 3) {
        std::cerr << "usage: make_rogue_capture <gim.json> <out.pcap>\n";
        return 2;
    }
    const auto model = gridwatch::gim::load_model_file(argv[1]);
    const auto capture = gridwatch::harness::rogue_endpoint_capture(model);
    gridwatch::pcap::write_file(argv[2], capture.packets);
    return 0;
}
