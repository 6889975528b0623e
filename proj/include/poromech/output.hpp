#ifndef POROMECH_OUTPUT_HPP
#define POROMECH_OUTPUT_HPP

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "poromech/config.hpp"

namespace poromech {

inline constexpr const char* kVersion = "poromech 0.1.0";

struct OutputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Per-run summary. Timing lives in a separate block: reruns with the same
/// config and seed reproduce everything outside of it bitwise.
struct RunManifest {
  std::uint64_t config_hash = 0;
  std::string version = kVersion;
  unsigned long seed = 0;
  int steps_completed = 0;
  bool failed = false;
  std::string error;
  double c1_estimate = -1.0;  // filled when the weak-coupling audit ran
  double weak_coupling_margin = 0.0;
  std::vector<int> newton_iters, fp_iters;
  std::vector<double> identity_residuals, graph_distances;
  std::vector<double> wall_ms;  // excluded from reproducibility comparisons
};

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

} // namespace detail

inline void write_series_csv(const std::string& path, const std::vector<EnergyLedger>& rows) {
  std::ofstream f(path);
  if (!f) throw OutputError("cannot write series file '" + path + "'");
  f << "t,F_f,F_s,F_g,F_eps,D,step_inequality_residual,mass_n,mass_w,"
       "dual_norm_n,dual_norm_w,graph_max_distance,newton_iters,fp_iters\n";
  for (const auto& r : rows) {
    f << detail::fmt17(r.t) << ',' << detail::fmt17(r.F_f) << ',' << detail::fmt17(r.F_s)
      << ',' << detail::fmt17(r.F_g) << ',' << detail::fmt17(r.F_eps) << ','
      << detail::fmt17(r.D) << ',' << detail::fmt17(r.step_inequality_residual) << ','
      << detail::fmt17(r.mass_n) << ',' << detail::fmt17(r.mass_w) << ','
      << detail::fmt17(r.dual_norm_incr_n) << ',' << detail::fmt17(r.dual_norm_incr_w)
      << ',' << detail::fmt17(r.graph_max_distance) << ',' << r.newton_iters << ','
      << r.fp_iters << '\n';
  }
  if (!f) throw OutputError("write failed for '" + path + "'");
}

/// Plain-text snapshot: `# field <name>` then one value (or d values) per
/// vertex or cell, 17 significant digits.
inline void write_field_snapshot(const std::string& path, const Mesh& mesh,
                                 const Spaces& sp, const State& st) {
  std::ofstream f(path);
  if (!f) throw OutputError("cannot write snapshot '" + path + "'");
  auto nodal = [&](const char* name, const Vec& v) {
    f << "# field " << name << '\n';
    for (int i = 0; i < mesh.n_vertices(); ++i) f << detail::fmt17(v[i]) << '\n';
  };
  auto cellwise = [&](const char* name, const Vec& v) {
    f << "# field " << name << '\n';
    for (int c = 0; c < mesh.n_cells(); ++c) f << detail::fmt17(v[c]) << '\n';
  };
  nodal("phi_n", st.phi_n);
  nodal("phi_w", st.phi_w);
  f << "# field u\n";
  for (int i = 0; i < mesh.n_vertices(); ++i) {
    for (int a = 0; a < mesh.dim; ++a)
      f << detail::fmt17(st.u[sp.mech.dof(i, a)]) << (a + 1 < mesh.dim ? " " : "");
    f << '\n';
  }
  cellwise("theta", st.theta);
  nodal("pi", st.pi);
  nodal("chi", st.chi);
  if (!f) throw OutputError("write failed for '" + path + "'");
}

inline nlohmann::json manifest_json(const RunManifest& m, bool include_timing = true) {
  nlohmann::json j;
  char hash[20];
  std::snprintf(hash, sizeof(hash), "%016" PRIx64, m.config_hash);
  j["version"] = m.version;
  j["config_hash"] = hash;
  j["seed"] = m.seed;
  j["steps_completed"] = m.steps_completed;
  j["failed"] = m.failed;
  j["error"] = m.error;
  if (m.c1_estimate >= 0.0) {
    j["c1_estimate"] = m.c1_estimate;
    j["weak_coupling_margin"] = m.weak_coupling_margin;
  }
  j["newton_iters"] = m.newton_iters;
  j["fp_iters"] = m.fp_iters;
  j["identity_residuals"] = m.identity_residuals;
  j["graph_distances"] = m.graph_distances;
  if (include_timing) j["timing"]["wall_ms"] = m.wall_ms;
  return j;
}

inline int snapshot_stride(int configured, int n_steps) {
  if (configured > 0) return configured;
  if (n_steps <= 100) return 1;
  return (n_steps + 99) / 100;
}

/// Emits series.csv, snapshots/, mesh.txt and manifest.json under out_dir.
inline void write_outputs(const std::string& out_dir, const Mesh& mesh, const Spaces& sp,
                          const Trajectory& traj, const RunManifest& manifest,
                          int snapshot_every) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir + "/snapshots", ec);
  if (ec) throw OutputError("cannot create output directory '" + out_dir + "'");

  write_series_csv(out_dir + "/series.csv", traj.ledgers);
  {
    std::ofstream mf(out_dir + "/mesh.txt");
    if (!mf) throw OutputError("cannot write mesh file");
    write_mesh(mesh, mf);
  }
  const int stride = snapshot_stride(snapshot_every, int(traj.states.size()) - 1);
  for (std::size_t j = 0; j < traj.states.size(); ++j) {
    if (j % std::size_t(stride) != 0 && j + 1 != traj.states.size()) continue;
    char name[64];
    std::snprintf(name, sizeof(name), "/snapshots/fields_%05zu.txt", j);
    write_field_snapshot(out_dir + name, mesh, sp, traj.states[j]);
  }
  std::ofstream jf(out_dir + "/manifest.json");
  if (!jf) throw OutputError("cannot write manifest");
  jf << manifest_json(manifest).dump(2) << '\n';
}

} // namespace poromech

#endif
