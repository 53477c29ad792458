// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <CLI11.hpp>

#include "darth/dataset.hpp"
#include "darth/hnsw.hpp"
#include "darth/ivf.hpp"
#include "darth/traindata.hpp"

namespace darth::cli {

namespace fs = std::filesystem;

/// Throws DataError naming the subcommand that produces `path` if it is
/// missing.
void require_artifact(const fs::path& path, std::string_view what, std::string_view producer);

/// Writes every option of `cmd` (flag, config-file or default value) as a
/// JSON object to `path`.
void write_resolved_config(const CLI::App& cmd, const fs::path& path);

/// Output directory of `path`, created if needed.
fs::path prepare_output(const fs::path& path);

std::shared_ptr<const Dataset> load_dataset(const fs::path& path, Role role, std::string_view producer);
GroundTruth load_gt(const fs::path& prefix, std::string_view producer);

/// An index file together with the base vectors it was built over. The kind
/// is read from the file's magic bytes.
struct LoadedIndex {
  traindata::IndexKind kind = traindata::IndexKind::hnsw;
  std::shared_ptr<const Dataset> base;
  std::optional<hnsw::HnswGraph> hnsw;
  std::optional<ivf::IvfIndex> ivf;

  std::size_t size() const { return base->count(); }
};

LoadedIndex load_index(const fs::path& index, const fs::path& base);

}  // namespace darth::cli
