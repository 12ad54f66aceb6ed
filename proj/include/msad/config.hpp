#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msad/model.hpp"

namespace msad {

// Parsed run configuration. A single JSON file describes the physics
// (species, couplings, kernel) plus optional particle, PDE and experiment
// sections; unknown keys are fatal.
struct AppConfig {
  SimConfig sim;
  bool has_particles = false;  // N present
  PdeConfig pde;               // derived; eps set iff "eps" present
  double pde_dt = 0;

  // experiment parameters (optional section)
  std::vector<std::uint64_t> N_list;
  std::vector<double> eps_list;
  double lambda = 0;
  double theta = 0;
  int reps = 0;

  std::uint64_t config_hash = 0;  // FNV-1a of the raw file bytes
};

AppConfig parse_config(const std::string& path);
AppConfig parse_config_text(const std::string& text);

struct RunManifest {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string version;
  double wall_seconds = 0;
  std::vector<std::pair<std::string, std::uint64_t>> files;  // path, checksum

  void add_file(const std::string& path);  // checksums the file on disk
  void write(const std::string& path) const;
};

std::uint64_t file_checksum(const std::string& path);

extern const char* kVersion;

}  // namespace msad
