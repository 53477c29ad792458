// SPDX-License-Identifier: Apache-2.0
#include "config.hpp"

#include <fstream>
#include <iomanip>

#include <json.hpp>

#include "darth/vectors_io.hpp"

namespace darth::cli {

void require_artifact(const fs::path& path, std::string_view what, std::string_view producer) {
  if (path.empty() || !fs::exists(path)) {
    throw DataError("missing " + std::string(what) + " '" + path.string() + "'; produce it with `darth " +
                    std::string(producer) + "`");
  }
}

void write_resolved_config(const CLI::App& cmd, const fs::path& path) {
  nlohmann::ordered_json j;
  j["subcommand"] = cmd.get_name();
  nlohmann::ordered_json opts = nlohmann::ordered_json::object();
  for (const CLI::Option* opt : cmd.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    std::vector<std::string> values = opt->results();
    if (values.empty() && !opt->get_default_str().empty()) values.push_back(opt->get_default_str());
    if (values.empty()) {
      opts[name] = nullptr;
    } else if (values.size() == 1 && opt->get_expected_max() <= 1) {
      opts[name] = values.front();
    } else {
      opts[name] = values;
    }
  }
  j["options"] = opts;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot create " + path.string());
  out << std::setw(2) << j << '\n';
}

fs::path prepare_output(const fs::path& path) {
  fs::path dir = path.parent_path();
  if (dir.empty()) dir = ".";
  fs::create_directories(dir);
  return dir;
}

std::shared_ptr<const Dataset> load_dataset(const fs::path& path, Role role, std::string_view producer) {
  require_artifact(path, std::string(role_name(role)) + " vectors", producer);
  return std::make_shared<const Dataset>(io::load_vectors(path, io::format_from_path(path), role));
}

GroundTruth load_gt(const fs::path& prefix, std::string_view producer) {
  require_artifact(fs::path(prefix.string() + ".ivecs"), "ground truth", producer);
  return io::load_ground_truth(prefix);
}

LoadedIndex load_index(const fs::path& index, const fs::path& base) {
  require_artifact(index, "index", "build");
  char magic[8] = {};
  {
    std::ifstream in(index, std::ios::binary);
    in.read(magic, sizeof(magic));
  }
  const std::string m(magic, sizeof(magic));
  LoadedIndex li;
  li.base = load_dataset(base, Role::base, "synth");
  if (m == "DHNSWGRF") {
    li.kind = traindata::IndexKind::hnsw;
    li.hnsw.emplace(hnsw::HnswGraph::load(index, li.base));
  } else if (m == "DIVFINDX") {
    li.kind = traindata::IndexKind::ivf;
    li.ivf.emplace(ivf::IvfIndex::load(index, li.base));
  } else {
    throw FormatError(index.string() + " is not an index file");
  }
  return li;
}

}  // namespace darth::cli
