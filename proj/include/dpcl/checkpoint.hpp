#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpcl/bsc.hpp"
#include "dpcl/experiment.hpp"
#include "dpcl/network.hpp"
#include "dpcl/pfi.hpp"
#include "dpcl/pima.hpp"

namespace dpcl {

// Everything needed to restore inference (and optimizer state) from a saved
// run. Doubles are serialized with shortest round-trip formatting, so a
// save/load/save cycle is byte-stable.
struct LoadedCheckpoint {
    std::uint64_t seed = 0;
    long iteration = 0;
    std::size_t num_classes = 0;
    MlpModel model;
    AdamState adam;
    BscState bsc;
    ClassLossTracker tracker;
    LrState lr;
    std::vector<double> feature_mean, feature_std;  // empty when unstandardized
};

void save_checkpoint(const std::string& path, const RunResult& result);
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace dpcl
