#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "dpstyler/embedding.hpp"

namespace dpstyler {

struct ManifestEntry {
  std::filesystem::path path;
  std::string domain;
  std::size_t label = 0;
};

/// Images to evaluate, grouped by domain. Domains and entries are kept sorted so iteration
/// order never depends on how the manifest was written.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<std::string> domains;
  std::vector<ManifestEntry> entries;

  std::size_t count(const std::string& domain) const;
};

/// Comma-separated `path,domain,class` with a header line. Relative paths resolve against the
/// manifest's directory.
DatasetManifest load_manifest_csv(const std::filesystem::path& path, const TaskDefinition& task);

/// root/<domain>/<class>/<image>. Every domain must contain at least one image.
DatasetManifest discover_manifest(const std::filesystem::path& root, const TaskDefinition& task);

/// A regular file is read as a CSV manifest, a directory is discovered.
DatasetManifest resolve_manifest(const std::filesystem::path& path, const TaskDefinition& task);

}  // namespace dpstyler
