// msad: numerical laboratory for moderately interacting multi-species
// particle systems and their aggregation-diffusion limits.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "msad/config.hpp"
#include "msad/harness.hpp"
#include "msad/metrics.hpp"
#include "msad/particles.hpp"
#include "msad/pde.hpp"
#include "msad/rng.hpp"

namespace fs = std::filesystem;
using namespace msad;

namespace {

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 1;
};

AppConfig load(const Common& c) {
  if (c.config_path.empty()) throw UsageError("--config is required");
  AppConfig app = parse_config(c.config_path);
  if (c.seed_set) app.sim.seed = c.seed;
  return app;
}

RunManifest make_manifest(const AppConfig& app) {
  RunManifest m;
  m.config_hash = app.config_hash;
  m.seed = app.sim.seed;
  m.version = kVersion;
  return m;
}

std::string snap_name(const std::string& dir, const char* tag, int rep, int ti) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_rep%03d_t%03d.msadp", tag, rep, ti);
  return (fs::path(dir) / buf).string();
}

struct KtFlags {
  double s = 0, eps = 0;
  int d = 3, points = 1024;
  double r_max = 96.0;
};

int cmd_kernel_table(const Common& cm, const KtFlags& kf, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  RieszSpec riesz;
  double eps = 0;
  double r_max = kf.r_max;
  std::uint64_t config_hash = 0, seed = 0;
  if (!cm.config_path.empty()) {
    AppConfig app = load(cm);
    riesz = app.sim.riesz;
    if (app.sim.moll.epsilon > 0)
      eps = app.sim.moll.epsilon;
    else if (app.pde.eps)
      eps = *app.pde.eps;
    r_max = 8 * app.sim.box.L;
    config_hash = app.config_hash;
    seed = app.sim.seed;
  }
  if (kf.s > 0) riesz.s = kf.s;
  if (kf.d > 0) riesz.d = kf.d;
  if (kf.eps > 0) eps = kf.eps;
  if (!(eps > 0))
    throw UsageError("kernel-table needs --eps (or a config with eps / N and ell)");
  KernelTable kt = build_kernel_table(riesz, MollifierSpec::from_eps(eps, riesz.d),
                                      kf.points, r_max);
  kt.save(out);
  RunManifest m;
  m.config_hash = config_hash;
  m.seed = seed;
  m.version = kVersion;
  m.add_file(out);
  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  m.write(out + ".manifest.json");
  std::printf("kernel table: s=%.4g eps=%.6g points=%zu -> %s\n", kt.s(), kt.eps(),
              kt.radii().size(), out.c_str());
  return 0;
}

int cmd_simulate(const Common& cm, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  AppConfig app = load(cm);
  if (!app.has_particles) throw UsageError("simulate needs a particle config (N)");
  fs::create_directories(out_dir);
  const KernelTable kt =
      kernel_table_cached(app.sim.riesz, app.sim.moll, 1024, 8 * app.sim.box.L);
  const SimResult res = simulate(app.sim, kt);
  RunManifest m = make_manifest(app);
  for (std::size_t ti = 0; ti < res.snapshots.size(); ++ti) {
    const std::string p = snap_name(out_dir, "snap", 0, static_cast<int>(ti));
    res.snapshots[ti].save(p, app.sim.seed);
    m.add_file(p);
  }
  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  m.write((fs::path(out_dir) / "manifest.json").string());
  std::printf("simulate: N=%llu snapshots=%zu max|X|=%.4g -> %s\n",
              static_cast<unsigned long long>(app.sim.N), res.snapshots.size(),
              res.max_abs_coord, out_dir.c_str());
  return 0;
}

int cmd_solve_pde(const Common& cm, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  AppConfig app = load(cm);
  fs::create_directories(out_dir);
  const PdeResult res = solve_pde(app.pde);
  RunManifest m = make_manifest(app);
  for (std::size_t ti = 0; ti < res.timeline.size(); ++ti) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "field_t%03d.msadf", static_cast<int>(ti));
    const std::string p = (fs::path(out_dir) / buf).string();
    res.timeline[ti].save(p);
    m.add_file(p);
  }
  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  m.write((fs::path(out_dir) / "manifest.json").string());
  std::printf("solve-pde: %s system, %zu outputs, max clip %.3g, max substeps %d -> %s\n",
              app.pde.eps ? "intermediate" : "limiting", res.timeline.size(),
              res.max_clip_fraction, res.max_substeps, out_dir.c_str());
  return 0;
}

int cmd_couple(const Common& cm, const std::string& fields_dir,
               const std::string& out_dir, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  AppConfig app = load(cm);
  if (!app.has_particles) throw UsageError("couple needs a particle config (N)");
  if (reps < 1) throw UsageError("--reps must be positive");
  fs::create_directories(out_dir);
  const KernelTable kt =
      kernel_table_cached(app.sim.riesz, app.sim.moll, 1024, 8 * app.sim.box.L);

  GradientTimeline fields;
  if (!fields_dir.empty()) {
    // Rebuild gradient frames from saved density fields.
    fields.grid = app.sim.box;
    std::vector<fs::path> paths;
    for (const auto& e : fs::directory_iterator(fields_dir))
      if (e.path().extension() == ".msadf") paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw UsageError("no .msadf fields in " + fields_dir);
    for (const auto& p : paths) {
      const DensityField df = DensityField::load(p.string());
      if (!(df.grid == app.sim.box))
        throw UsageError("field grid does not match config box: " + p.string());
      GradientFields gf;
      gf.t = df.t;
      for (const auto& sp : df.species)
        gf.per_species.push_back(convolve_gradient(df.grid, sp, app.sim.riesz, &kt));
      fields.times.push_back(df.t);
      fields.frames.push_back(std::move(gf));
    }
  } else {
    PdeConfig pc = app.pde;
    pc.eps = app.sim.moll.epsilon;
    fields = solve_pde(pc, 17).gradients;
  }

  RunManifest m = make_manifest(app);
  for (int rep = 0; rep < reps; ++rep) {
    SimConfig cr = app.sim;
    cr.seed = reps == 1 ? app.sim.seed : mix_seed(app.sim.seed, rep);
    const CoupledResult res = simulate_coupled(cr, kt, fields);
    for (std::size_t ti = 0; ti < res.interacting.size(); ++ti) {
      const std::string px = snap_name(out_dir, "couple_x", rep, static_cast<int>(ti));
      const std::string pt = snap_name(out_dir, "couple_xt", rep, static_cast<int>(ti));
      res.interacting[ti].save(px, cr.seed);
      res.intermediate[ti].save(pt, cr.seed);
      m.add_file(px);
      m.add_file(pt);
    }
  }
  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  m.write((fs::path(out_dir) / "manifest.json").string());
  std::printf("couple: N=%llu reps=%d -> %s\n",
              static_cast<unsigned long long>(app.sim.N), reps, out_dir.c_str());
  return 0;
}

int cmd_check_smallness(const Common& cm) {
  AppConfig app = load(cm);
  const SmallnessReport rep = check_smallness(app.pde);
  std::printf("smallness condition (p=%g, C_HLS=%.6g, C_GNS=%.6g):\n", rep.p, rep.c_hls,
              rep.c_gns);
  for (std::size_t a = 0; a < rep.lhs.size(); ++a)
    std::printf("  species %zu: lhs=%.6g rhs=%.6g %s\n", a, rep.lhs[a], rep.rhs[a],
                rep.lhs[a] <= rep.rhs[a] ? "ok" : "VIOLATED");
  std::printf("satisfied: %s\n", rep.satisfied ? "yes" : "no");
  return 0;
}

int cmd_compare(const std::string& fa, const std::string& fb) {
  const DensityField a = DensityField::load(fa);
  const DensityField b = DensityField::load(fb);
  if (!(a.grid == b.grid)) throw UsageError("fields live on different grids");
  if (a.n() != b.n()) throw UsageError("fields have different species counts");
  const double cv = std::pow(a.grid.h(), 3);
  for (int sp = 0; sp < a.n(); ++sp) {
    Histogram ha, hb;
    ha.bins = hb.bins = {a.grid.m, a.grid.m, a.grid.m};
    ha.lo = hb.lo = {-a.grid.L, -a.grid.L, -a.grid.L};
    ha.hi = hb.hi = {a.grid.L, a.grid.L, a.grid.L};
    ha.mass.resize(a.grid.cells());
    hb.mass.resize(a.grid.cells());
    for (std::size_t i = 0; i < ha.mass.size(); ++i) {
      ha.mass[i] = std::max(a.species[sp][i], 0.0) * cv;
      hb.mass[i] = std::max(b.species[sp][i], 0.0) * cv;
    }
    ha.normalize();
    hb.normalize();
    const DistanceReport dr = ckp_check(ha, hb);
    std::printf("compare species=%d rel_entropy %.8g\n", sp, dr.rel_entropy);
    std::printf("compare species=%d rel_entropy_smoothed %.8g\n", sp,
                relative_entropy_smoothed(ha, hb));
    std::printf("compare species=%d l1 %.8g\n", sp, dr.l1);
    std::printf("compare species=%d l2 %.8g\n", sp, dr.l2);
    std::printf("compare species=%d ckp_margin %.8g\n", sp, dr.ckp_margin);
  }
  return 0;
}

int cmd_coupling_stats(const Common& cm, const std::string& runs_dir, double lambda) {
  AppConfig app = load(cm);
  // Reassemble coupled runs from snapshot files.
  std::vector<CoupledResult> runs;
  for (int rep = 0;; ++rep) {
    CoupledResult cr;
    for (int ti = 0;; ++ti) {
      const std::string px = snap_name(runs_dir, "couple_x", rep, ti);
      const std::string pt = snap_name(runs_dir, "couple_xt", rep, ti);
      if (!fs::exists(px)) break;
      if (!fs::exists(pt)) throw RuntimeFailure("missing intermediate snapshot " + pt);
      cr.interacting.push_back(ParticleState::load(px));
      cr.intermediate.push_back(ParticleState::load(pt));
    }
    if (cr.interacting.empty()) break;
    runs.push_back(std::move(cr));
  }
  if (runs.empty()) throw UsageError("no coupled runs found in " + runs_dir);
  const CouplingStats cs = coupling_event(runs, lambda, app.sim);
  std::printf("coupling-stats lambda=%.4g reps=%llu\n", cs.lambda,
              static_cast<unsigned long long>(cs.reps));
  for (std::size_t i = 0; i < cs.times.size(); ++i)
    std::printf("  t=%.6g P=%.6g wilson=[%.6g, %.6g]\n", cs.times[i], cs.prob[i],
                cs.wilson_lo[i], cs.wilson_hi[i]);
  return 0;
}

int cmd_rates(const Common& cm, const std::string& experiment, const std::string& out,
              const std::string& plot_data) {
  const auto t0 = std::chrono::steady_clock::now();
  AppConfig app = load(cm);
  RateTable table;
  if (experiment == "pde-error") {
    if (app.eps_list.empty()) throw UsageError("experiment.eps_list required");
    table = run_pde_error_experiment(app.pde, app.eps_list);
  } else if (experiment == "coupling") {
    if (app.N_list.empty()) throw UsageError("experiment.N_list required");
    table = run_coupling_experiment(app.sim, app.N_list, app.lambda, app.reps);
  } else if (experiment == "marginal") {
    if (app.N_list.empty()) throw UsageError("experiment.N_list required");
    table = run_marginal_rate_experiment(app.sim, app.N_list, app.reps);
  } else if (experiment == "lln") {
    if (app.N_list.empty()) throw UsageError("experiment.N_list required");
    table = run_lln_experiment(app.sim, app.N_list, app.theta, app.reps);
  } else {
    throw UsageError("unknown experiment: " + experiment +
                     " (pde-error|coupling|marginal|lln)");
  }
  table.write_csv(out, app.sim.seed);
  RunManifest m = make_manifest(app);
  m.add_file(out);
  if (!plot_data.empty()) {
    table.write_plot_data(plot_data);
    m.add_file(plot_data);
  }
  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  m.write(out + ".manifest.json");
  for (const auto& r : table.rows)
    std::printf("%s scale=%.6g %s=%.6g +- %.3g (reps=%llu)\n", experiment.c_str(),
                r.scale, r.metric.c_str(), r.value, r.err,
                static_cast<unsigned long long>(r.reps));
  if (table.fitted)
    std::printf("fit: slope=%.4g stderr=%.4g r2=%.4g\n", table.slope, table.slope_err,
                table.r2);
  for (const auto& nt : table.notes) std::printf("note: %s\n", nt.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"msad: moderately interacting multi-species particle/PDE laboratory"};
  cli.require_subcommand(1);

  Common cm;
  cli.add_option("--threads", cm.threads, "worker threads (default 1)");

  auto add_common = [&](CLI::App* sub, bool needs_config = true) {
    auto* o = sub->add_option("--config", cm.config_path, "JSON config path");
    if (needs_config) o->required();
    sub->add_option("--seed", cm.seed, "seed override")
        ->each([&](const std::string&) { cm.seed_set = true; });
  };

  std::string out, out_dir, fields_dir, field_a, field_b, experiment, plot_data;
  std::string runs_dir;
  double lambda = 0;
  int reps = 1;

  KtFlags kf;
  auto* sc_kt = cli.add_subcommand("kernel-table", "build and save a kernel table");
  add_common(sc_kt, /*needs_config=*/false);
  sc_kt->add_option("--s", kf.s, "Riesz exponent");
  sc_kt->add_option("--d", kf.d, "dimension");
  sc_kt->add_option("--eps", kf.eps, "mollification scale");
  sc_kt->add_option("--points", kf.points, "table points");
  sc_kt->add_option("--out", out, "output .msadk path")->required();

  auto* sc_sim = cli.add_subcommand("simulate", "run the interacting particle system");
  add_common(sc_sim);
  sc_sim->add_option("--out-dir", out_dir, "snapshot directory")->required();

  auto* sc_pde = cli.add_subcommand("solve-pde", "solve the PDE system");
  add_common(sc_pde);
  sc_pde->add_option("--out-dir", out_dir, "field directory")->required();

  auto* sc_cpl = cli.add_subcommand("couple", "run the coupled particle systems");
  add_common(sc_cpl);
  sc_cpl->add_option("--fields", fields_dir, "directory of .msadf density fields");
  sc_cpl->add_option("--out-dir", out_dir, "snapshot directory")->required();
  sc_cpl->add_option("--reps", reps, "replication count");

  auto* sc_sm = cli.add_subcommand("check-smallness", "evaluate the smallness condition");
  add_common(sc_sm);

  auto* sc_cmp = cli.add_subcommand("compare", "distances between two density fields");
  sc_cmp->add_option("--field-a", field_a)->required();
  sc_cmp->add_option("--field-b", field_b)->required();

  auto* sc_cs = cli.add_subcommand("coupling-stats", "coupling event probabilities");
  add_common(sc_cs);
  sc_cs->add_option("--runs-dir", runs_dir, "directory of coupled snapshots")->required();
  sc_cs->add_option("--lambda", lambda, "coupling exponent")->required();

  auto* sc_rt = cli.add_subcommand("rates", "run a scaling-law experiment");
  add_common(sc_rt);
  sc_rt->add_option("--experiment", experiment, "pde-error|coupling|marginal|lln")
      ->required();
  sc_rt->add_option("--out", out, "output CSV path")->required();
  sc_rt->add_option("--plot-data", plot_data, "emit (x, y, yerr) triples");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    cli.exit(e);
    return 1;
  }

  try {
    set_thread_count(cm.threads);
    if (sc_kt->parsed()) return cmd_kernel_table(cm, kf, out);
    if (sc_sim->parsed()) return cmd_simulate(cm, out_dir);
    if (sc_pde->parsed()) return cmd_solve_pde(cm, out_dir);
    if (sc_cpl->parsed()) return cmd_couple(cm, fields_dir, out_dir, reps);
    if (sc_sm->parsed()) return cmd_check_smallness(cm);
    if (sc_cmp->parsed()) return cmd_compare(field_a, field_b);
    if (sc_cs->parsed()) return cmd_coupling_stats(cm, runs_dir, lambda);
    if (sc_rt->parsed()) return cmd_rates(cm, experiment, out, plot_data);
    std::fprintf(stderr, "no subcommand\n");
    return 1;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const InvariantViolation& e) {
    std::fprintf(stderr, "invariant violation: %s\n", e.what());
    return 3;
  } catch (const RuntimeFailure& e) {
    std::fprintf(stderr, "runtime failure: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime failure: %s\n", e.what());
    return 2;
  }
}
