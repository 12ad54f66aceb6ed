#include "msad/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace msad {

const char* kVersion = "msad 1.0.0";

namespace {

using json = nlohmann::json;

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw UsageError("unknown config key '" + it.key() + "' in " + where +
                       " (strict mode)");
}

Vec3 parse_vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3)
    throw UsageError(where + " must be an array of 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

AppConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw UsageError(std::string("config parse error: ") + e.what());
  }
  check_keys(j, {"d", "s", "n", "a", "species", "ell", "eps", "N", "dt", "T", "seed",
                 "box", "output_times", "pde", "experiment"},
             "top level");

  AppConfig app;
  app.config_hash = fnv1a(text);
  SimConfig& c = app.sim;
  c.riesz.d = j.value("d", 3);
  c.riesz.s = j.value("s", 1.0);
  c.riesz.validate();
  c.n = j.value("n", 1);
  if (!j.contains("species") || !j["species"].is_array() ||
      static_cast<int>(j["species"].size()) != c.n)
    throw UsageError("config must list exactly n species");
  for (const auto& sp : j["species"]) {
    check_keys(sp, {"sigma", "center", "width", "trunc_radius"}, "species");
    SpeciesConfig sc;
    sc.sigma = sp.value("sigma", 1.0);
    if (sp.contains("center")) sc.init.center = parse_vec3(sp["center"], "center");
    sc.init.width = sp.value("width", 1.0);
    sc.init.trunc_radius = sp.value("trunc_radius", 0.0);
    sc.validate();
    c.species.push_back(sc);
  }
  if (!j.contains("a")) throw UsageError("config must provide the interaction matrix a");
  c.a.n = c.n;
  for (const auto& row : j["a"]) {
    if (static_cast<int>(row.size()) != c.n)
      throw UsageError("interaction matrix a must be n x n");
    for (const auto& v : row) c.a.a.push_back(v.get<double>());
  }
  c.a.validate();

  if (j.contains("box")) {
    check_keys(j["box"], {"L", "m"}, "box");
    c.box.L = j["box"].value("L", 12.0);
    c.box.m = j["box"].value("m", 48);
  }
  c.box.validate();

  c.T = j.value("T", 0.5);
  c.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("output_times"))
    for (const auto& t : j["output_times"]) c.output_times.push_back(t.get<double>());

  const bool has_ell = j.contains("ell"), has_eps = j.contains("eps");
  if (has_ell && has_eps) throw UsageError("give either ell or eps, not both");
  double eps_direct = 0;
  if (has_ell) {
    const double ell = j["ell"].get<double>();
    const double ell_hi = 1.0 / (2 * c.riesz.s + 4);
    if (!(ell > 0 && ell < ell_hi)) {
      char buf[128];
      std::snprintf(buf, sizeof(buf),
                    "ell=%.6g outside (0, %.6g) required by Eq. (range l)", ell, ell_hi);
      throw UsageError(buf);
    }
    c.moll.ell = ell;
  } else if (has_eps) {
    eps_direct = j["eps"].get<double>();
    if (!(eps_direct > 0)) throw UsageError("eps must be positive");
  }

  if (j.contains("N")) {
    app.has_particles = true;
    c.N = j["N"].get<std::uint64_t>();
    if (!has_ell && !has_eps)
      throw UsageError("particle config needs ell (eps = N^-ell) or eps");
    c.moll = has_ell ? MollifierSpec::from_ell(c.moll.ell, c.N, c.riesz.d)
                     : MollifierSpec::from_eps(eps_direct, c.riesz.d);
    if (!j.contains("dt")) throw UsageError("particle config needs dt");
    c.dt = j["dt"].get<double>();
    const double cap = c.stability_cap();
    if (c.dt > cap * (1 + 1e-12)) {
      char buf[128];
      std::snprintf(buf, sizeof(buf),
                    "dt=%.6g exceeds the stability cap 0.1*eps^(s+2) = %.6g", c.dt, cap);
      throw UsageError(buf);
    }
    c.validate();
  } else if (j.contains("dt")) {
    c.dt = j["dt"].get<double>();
  }

  // PDE section.
  app.pde.grid = c.box;
  app.pde.riesz = c.riesz;
  app.pde.a = c.a;
  app.pde.species = c.species;
  app.pde.T = c.T;
  app.pde.dt = c.T / 64;
  if (has_eps) app.pde.eps = eps_direct;
  if (j.contains("pde")) {
    check_keys(j["pde"], {"dt", "outputs"}, "pde");
    if (j["pde"].contains("dt")) app.pde.dt = j["pde"]["dt"].get<double>();
    if (j["pde"].contains("outputs")) app.pde.outputs = j["pde"]["outputs"].get<int>();
  }
  app.pde_dt = app.pde.dt;
  app.pde.validate();

  if (j.contains("experiment")) {
    const auto& e = j["experiment"];
    check_keys(e, {"N_list", "eps_list", "lambda", "theta", "reps"}, "experiment");
    if (e.contains("N_list"))
      for (const auto& v : e["N_list"]) app.N_list.push_back(v.get<std::uint64_t>());
    if (e.contains("eps_list"))
      for (const auto& v : e["eps_list"]) app.eps_list.push_back(v.get<double>());
    app.lambda = e.value("lambda", 0.0);
    app.theta = e.value("theta", 0.0);
    app.reps = e.value("reps", 0);
  }
  return app;
}

AppConfig parse_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("config file not found: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

std::uint64_t file_checksum(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw RuntimeFailure("cannot checksum missing file: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  const std::string data = ss.str();
  return fnv1a(data.data(), data.size());
}

void RunManifest::add_file(const std::string& path) {
  files.emplace_back(path, file_checksum(path));
}

void RunManifest::write(const std::string& path) const {
  nlohmann::json j;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["version"] = version.empty() ? kVersion : version;
  j["wall_seconds"] = wall_seconds;
  nlohmann::json fl = nlohmann::json::array();
  for (const auto& [p, ck] : files) fl.push_back({{"path", p}, {"checksum", ck}});
  j["files"] = fl;
  std::ofstream os(path);
  if (!os) throw RuntimeFailure("cannot write manifest: " + path);
  os << j.dump(2) << "\n";
}

}  // namespace msad
