#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fklab/experiment.hpp"

using namespace fklab;
using experiment::json;

namespace {

constexpr int kOk = 0, kError = 1, kInconsistent = 2;

int cmd_run(const std::string& cfg_path, const std::string& out_dir, int dump_paths) {
  const auto cfg = experiment::load_config(cfg_path);
  const std::string dir = out_dir.empty() ? cfg.output_dir : out_dir;
  auto bundle = experiment::run(cfg);
  const auto files = experiment::report(bundle, dir);
  if (dump_paths > 0) io::write_text(dir + "/paths.csv", experiment::path_dump_csv(cfg, dump_paths));
  std::cout << bundle.verdict << "\n";
  for (const auto& f : files) std::cout << "wrote " << dir << "/" << f << "\n";
  return bundle.status == experiment::Status::inconsistent ? kInconsistent : kOk;
}

int cmd_spectral(const std::string& cfg_path, const std::string& out) {
  const auto cfg = experiment::load_config(cfg_path);
  const auto st = experiment::spectral_stage(cfg);
  json j = st.to_json();
  j["alpha"] = cfg.alpha;
  io::write_text(out, j.dump(2) + "\n");
  std::cout << "lambda = " << (st.lambda ? io::fmt(*st.lambda) : std::string("undecided")) << "\n";
  return kOk;
}

int cmd_classify(const std::string& measure, const std::string& process, const std::string& out,
                 const std::vector<double>& alphas) {
  const auto nu = io::measure_from_json(io::read_file(measure));
  const auto spec = io::process_from_json(io::read_file(process));
  kato::ClassifyOptions opt;
  if (!alphas.empty()) opt.alphas = alphas;
  const auto rep = kato::classify(nu, spec, opt);
  json j = io::to_json(rep);
  j["measure"] = io::to_json(nu);
  j["process"] = io::to_json(spec);
  io::write_text(out, j.dump(2) + "\n");
  std::cout << j["flags"].dump() << "\n";
  return kOk;
}

int cmd_kernel(const std::string& cfg_path, const std::string& out_dir) {
  const auto cfg = experiment::load_config(cfg_path);
  const auto k = experiment::kernel_stage(cfg);
  json j{{"kernel", experiment::kernel_json(k)}};
  io::AtomicWriter w(out_dir.empty() ? cfg.output_dir : out_dir);
  w.add("kernel.csv", experiment::kernel_csv(k));
  if (cfg.envelope) {
    const auto fo = experiment::fit_options(cfg.tol);
    const auto k0 = envelopes::fit_envelope(k, *cfg.envelope, false, fo);
    const auto kf = envelopes::fit_envelope(k, *cfg.envelope, true, fo);
    j["fits"] = {{"k_zero", io::to_json(k0)}, {"allow_k", io::to_json(kf)}};
    j["verdict"] = {{"k_zero_two_sided", k0.passed_upper && k0.passed_lower},
                    {"finite_k_two_sided", kf.passed_upper && kf.passed_lower},
                    {"fitted_k", kf.k}};
    w.add("ratio.csv", experiment::ratio_csv(k, *cfg.envelope));
  }
  w.add("kernel_summary.json", j.dump(2) + "\n");
  w.commit();
  std::cout << "estimated " << k.n_pairs() << " pairs at " << k.n_times() << " times\n";
  return kOk;
}

int cmd_gauge(const std::string& cfg_path, const std::string& out_dir) {
  const auto cfg = experiment::load_config(cfg_path);
  if (!cfg.gauge) fail(Errc::config_error, "config: gauge section required");
  const auto g = experiment::gauge_stage(cfg);
  std::optional<fk::GaugeIdentity> id;
  if (g.points.size() >= 3 && cfg.mu.radial()) id = fk::gauge_identity_residual(g, cfg.mu, cfg.sim_process());
  io::AtomicWriter w(out_dir.empty() ? cfg.output_dir : out_dir);
  w.add("gauge.csv", experiment::gauge_csv(g));
  w.add("gauge_summary.json", experiment::gauge_json(g, id).dump(2) + "\n");
  w.commit();
  std::cout << "gauge bounded: " << tri_name(g.bounded) << "\n";
  if (id) std::cout << "identity residual consistent: " << (id->consistent ? "yes" : "no") << "\n";
  return id && !id->consistent ? kInconsistent : kOk;
}

int cmd_resolvent(const std::string& cfg_path, const std::string& out_dir) {
  const auto cfg = experiment::load_config(cfg_path);
  if (!cfg.resolvent) fail(Errc::config_error, "config: resolvent section required");
  const auto r = experiment::resolvent_stage(cfg);
  io::AtomicWriter w(out_dir.empty() ? cfg.output_dir : out_dir);
  w.add("resolvent.csv", experiment::resolvent_csv(r));
  w.add("resolvent_summary.json", experiment::resolvent_json(r).dump(2) + "\n");
  w.commit();
  std::cout << "resolvent finite: " << tri_name(r.finite) << "\n";
  return kOk;
}

int cmd_envelope(const std::string& env_path, const std::vector<double>& ts, const std::vector<double>& rs,
                 double k, const std::string& out) {
  const auto fam = io::envelope_from_json(io::read_file(env_path));
  const Point x(fam.dim(), 0.0);
  std::ostringstream s;
  s << "t,r,value\n";
  for (double t : ts)
    for (double r : rs) s << io::fmt(t) << ',' << io::fmt(r) << ',' << io::fmt(std::exp(k * t) * envelopes::eval_envelope_r(fam, t, x, r)) << '\n';
  if (out.empty())
    std::cout << s.str();
  else
    io::write_text(out, s.str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fklab: Feynman-Kac perturbation experiments"};
  app.require_subcommand(1);

  std::string cfg, out, out_dir, measure, process, envelope;
  int dump_paths = 0;
  std::vector<double> alphas, ts, rs;
  double k = 0.0;

  auto* run = app.add_subcommand("run", "run the full pipeline from a config");
  run->add_option("--config", cfg, "experiment config JSON")->required();
  run->add_option("--out-dir", out_dir, "override output_dir");
  run->add_option("--dump-paths", dump_paths, "write the first N sample paths to paths.csv");

  auto* spec = app.add_subcommand("spectral", "bottom of the form pencil with a mesh study");
  spec->add_option("--config", cfg)->required();
  spec->add_option("--out", out)->required();

  auto* kc = app.add_subcommand("kato-classify", "class flags of a measure");
  kc->add_option("--measure", measure)->required();
  kc->add_option("--process", process)->required();
  kc->add_option("--out", out)->required();
  kc->add_option("--alphas", alphas, "alpha ladder")->delimiter(',');

  auto* fkk = app.add_subcommand("fk-kernel", "Monte Carlo kernel estimate");
  fkk->add_option("--config", cfg)->required();
  fkk->add_option("--out-dir", out_dir);

  auto* gg = app.add_subcommand("gauge", "gauge function estimate");
  gg->add_option("--config", cfg)->required();
  gg->add_option("--out-dir", out_dir);

  auto* rv = app.add_subcommand("resolvent", "perturbed resolvent kernel estimate");
  rv->add_option("--config", cfg)->required();
  rv->add_option("--out-dir", out_dir);

  auto* ev = app.add_subcommand("envelope-eval", "evaluate an envelope on a (t, r) grid");
  ev->add_option("--envelope", envelope)->required();
  ev->add_option("--t", ts)->required()->delimiter(',');
  ev->add_option("--r", rs)->required()->delimiter(',');
  ev->add_option("--k", k, "growth rate e^{kt}");
  ev->add_option("--out", out, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kError;
  }

  try {
    if (*run) return cmd_run(cfg, out_dir, dump_paths);
    if (*spec) return cmd_spectral(cfg, out);
    if (*kc) return cmd_classify(measure, process, out, alphas);
    if (*fkk) return cmd_kernel(cfg, out_dir);
    if (*gg) return cmd_gauge(cfg, out_dir);
    if (*rv) return cmd_resolvent(cfg, out_dir);
    if (*ev) return cmd_envelope(envelope, ts, rs, k, out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  }
  return kError;
}
