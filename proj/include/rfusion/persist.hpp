#pragma once

// Checkpoints (model bundles) and datasets (generated scenarios) on top of
// the binary container.

#include <filesystem>

#include "rfusion/container.hpp"
#include "rfusion/nets.hpp"
#include "rfusion/simdata.hpp"

namespace rfusion {

Container checkpoint_container(const ModelBundle& bundle);
/// DataError when a parameter is missing or its shape disagrees with the
/// architecture recorded in the metadata.
ModelBundle bundle_from_container(const Container& c);

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle);
ModelBundle load_checkpoint(const std::filesystem::path& path);

Container dataset_container(const Scenario& scenario);
Scenario scenario_from_container(const Container& c);

void save_dataset(const std::filesystem::path& path, const Scenario& scenario);
Scenario load_dataset(const std::filesystem::path& path);

}  // namespace rfusion
