#include "dpstyler/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <tuple>

#include "dpstyler/errors.hpp"

namespace dpstyler {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back().push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back().push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back().push_back(c);
    }
  }
  return fields;
}

void finalize(DatasetManifest& manifest) {
  std::sort(manifest.entries.begin(), manifest.entries.end(), [](const ManifestEntry& a, const ManifestEntry& b) {
    return std::tie(a.domain, a.path) < std::tie(b.domain, b.path);
  });
  std::set<std::string> domains;
  for (const auto& e : manifest.entries) domains.insert(e.domain);
  manifest.domains.assign(domains.begin(), domains.end());
  if (manifest.domains.empty()) throw LoadError("manifest has no images");
}

}  // namespace

std::size_t DatasetManifest::count(const std::string& domain) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [&](const ManifestEntry& e) { return e.domain == domain; }));
}

DatasetManifest load_manifest_csv(const std::filesystem::path& path, const TaskDefinition& task) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open manifest " + path.string());
  DatasetManifest manifest;
  manifest.root = path.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw LoadError(path.string() + ": empty manifest");
  const auto header = split_csv_line(line);
  if (header != std::vector<std::string>{"path", "domain", "class"}) {
    throw LoadError(path.string() + ": header must be 'path,domain,class'");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty()) {
      throw LoadError(path.string() + ":" + std::to_string(line_no) + ": expected path,domain,class");
    }
    std::size_t label = 0;
    try {
      label = task.index_of(fields[2]);
    } catch (const ContractError&) {
      throw LoadError(path.string() + ":" + std::to_string(line_no) + ": unknown class '" + fields[2] + "'");
    }
    std::filesystem::path image = fields[0];
    if (image.is_relative()) image = manifest.root / image;
    manifest.entries.push_back({image, fields[1], label});
  }
  finalize(manifest);
  return manifest;
}

DatasetManifest discover_manifest(const std::filesystem::path& root, const TaskDefinition& task) {
  if (!std::filesystem::is_directory(root)) throw LoadError("dataset root " + root.string() + " is not a directory");
  DatasetManifest manifest;
  manifest.root = root;
  for (const auto& domain_dir : std::filesystem::directory_iterator(root)) {
    if (!domain_dir.is_directory()) continue;
    const std::string domain = domain_dir.path().filename().string();
    std::size_t found = 0;
    for (const auto& class_dir : std::filesystem::directory_iterator(domain_dir.path())) {
      if (!class_dir.is_directory()) continue;
      const std::string class_name = class_dir.path().filename().string();
      std::size_t label = 0;
      try {
        label = task.index_of(class_name);
      } catch (const ContractError&) {
        throw LoadError(class_dir.path().string() + ": unknown class '" + class_name + "'");
      }
      for (const auto& file : std::filesystem::directory_iterator(class_dir.path())) {
        if (!file.is_regular_file()) continue;
        manifest.entries.push_back({file.path(), domain, label});
        ++found;
      }
    }
    if (found == 0) throw LoadError("domain '" + domain + "' under " + root.string() + " has no images");
  }
  finalize(manifest);
  return manifest;
}

DatasetManifest resolve_manifest(const std::filesystem::path& path, const TaskDefinition& task) {
  if (std::filesystem::is_regular_file(path)) return load_manifest_csv(path, task);
  return discover_manifest(path, task);
}

}  // namespace dpstyler
