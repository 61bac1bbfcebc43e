#include "dsparse/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "dsparse/attention.hpp"
#include "dsparse/error.hpp"
#include "dsparse/graph.hpp"
#include "dsparse/masks.hpp"
#include "dsparse/parallel.hpp"
#include "dsparse/sweep.hpp"

namespace dsparse {
namespace {

struct Options {
  std::string config;
  std::uint64_t seed = 1;
  std::string out;
  bool quiet = false;

  GridSpec grid;
  std::string pattern = "doppler";
  bool causal = false;
  std::size_t max_tokens = MaskBuildOptions{}.max_tokens;

  std::string mode = "both";
  std::string report;
  std::size_t max_all_pairs = DiameterOptions{}.max_all_pairs;
  std::size_t sample_sources = 0;

  std::size_t trials = 10;
  std::size_t model_dim = 0;
  double tolerance = 1e-6;
  double grad_tolerance = 1e-5;

  std::size_t samples = 16;

  double v_min = 0.0;
  double v_max = 10.0;
  double carrier_hz = 2.6e9;
  std::size_t resource_blocks = 4;
  std::size_t symbols = 14;
  std::size_t taps = 4;
  double scs_hz = 30e3;
  double tti_s = 500e-6;
  double delay_spread_s = 100e-9;
  std::size_t antennas = 8;
  std::size_t users = 2;
  std::size_t realizations = 0;  // per-command default applied later

  std::string method = "mmse";
  double snr_db = 10.0;
  std::string csv;
  double est_snr_db = std::numeric_limits<double>::infinity();
  std::size_t iterations = 100;
  std::string gradient = "numeric";

  std::vector<double> snr_list{-10, -5, 0, 5, 10, 15, 20};
  std::vector<std::string> velocity_ranges{"0:10", "30:40"};
  std::vector<std::string> methods{"zf", "mmse", "opt"};
  std::string format;
};

struct Commands {
  CLI::App* masks;
  CLI::App* graph;
  CLI::App* attn;
  CLI::App* histogram;
  CLI::App* channel;
  CLI::App* beamform;
  CLI::App* sweep;
};

void add_grid_args(CLI::App* cmd, Options& o) {
  cmd->add_option("--L", o.grid.L, "OFDM symbols (time axis)")->capture_default_str();
  cmd->add_option("--K", o.grid.K, "subcarriers (frequency axis)")->capture_default_str();
  cmd->add_option("--heads", o.grid.heads, "attention heads p")->capture_default_str();
  cmd->add_option("--lambda", o.grid.lambda, "time bias")->capture_default_str();
}

void add_ofdm_args(CLI::App* cmd, Options& o) {
  cmd->add_option("--v-min", o.v_min, "minimum UE speed [m/s]")->capture_default_str();
  cmd->add_option("--v-max", o.v_max, "maximum UE speed [m/s]")->capture_default_str();
  cmd->add_option("--fc", o.carrier_hz, "carrier frequency [Hz]")->capture_default_str();
  cmd->add_option("--rb", o.resource_blocks, "resource blocks (12 subcarriers each)")->capture_default_str();
  cmd->add_option("--symbols", o.symbols, "OFDM symbols per slot")->capture_default_str();
  cmd->add_option("--taps", o.taps, "tapped delay line length")->capture_default_str();
  cmd->add_option("--scs", o.scs_hz, "subcarrier spacing [Hz]")->capture_default_str();
  cmd->add_option("--tti", o.tti_s, "slot duration [s]")->capture_default_str();
  cmd->add_option("--delay-spread", o.delay_spread_s, "tap spacing [s]")->capture_default_str();
  cmd->add_option("--antennas", o.antennas, "receive antennas M")->capture_default_str();
  cmd->add_option("--users", o.users, "single-antenna UEs N")->capture_default_str();
}

void add_link_args(CLI::App* cmd, Options& o) {
  cmd->add_option("--est-snr-db", o.est_snr_db, "channel estimation SNR, inf for perfect CSI");
  cmd->add_option("--iterations", o.iterations, "opt iterations")->capture_default_str();
  cmd->add_option("--gradient", o.gradient, "opt gradient")
      ->check(CLI::IsMember({"numeric", "analytic"}))
      ->capture_default_str();
}

Commands build_app(CLI::App& app, Options& o) {
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.fallthrough();
  app.set_version_flag("--version", version_string());
  app.add_option("--config", o.config, "flat key = value file; command-line flags win");
  app.add_option("--seed", o.seed, "RNG seed")->capture_default_str();
  app.add_option("--out", o.out, "output file (stdout when omitted)");
  app.add_flag("--quiet", o.quiet, "suppress summaries");

  Commands c{};
  c.masks = app.add_subcommand("masks", "build attention masks and export them as JSON");
  add_grid_args(c.masks, o);
  c.masks->add_option("--pattern", o.pattern)->check(CLI::IsMember({"doppler", "fixed"}))->capture_default_str();
  c.masks->add_flag("--causal", o.causal, "causal fixed-strided baseline");
  c.masks->add_option("--max-tokens", o.max_tokens)->capture_default_str();

  c.graph = app.add_subcommand("graph", "connectivity and hop diameter of the union attention graph");
  add_grid_args(c.graph, o);
  c.graph->add_option("--mode", o.mode)->check(CLI::IsMember({"directed", "undirected", "both"}))->capture_default_str();
  c.graph->add_option("--report", o.report, "JSON report path");
  c.graph->add_option("--max-all-pairs", o.max_all_pairs, "node cap for exact all-pairs BFS")->capture_default_str();
  c.graph->add_option("--sample-sources", o.sample_sources, "BFS from this many seeded sources above the cap");

  c.attn = app.add_subcommand("attn-check", "sparse attention vs dense oracle and gradient check");
  add_grid_args(c.attn, o);
  c.attn->add_option("--trials", o.trials)->capture_default_str();
  c.attn->add_option("--model-dim", o.model_dim, "model width, default 2 per head");
  c.attn->add_option("--tolerance", o.tolerance, "max abs forward deviation")->capture_default_str();
  c.attn->add_option("--grad-tolerance", o.grad_tolerance, "max relative gradient error")->capture_default_str();

  c.histogram = app.add_subcommand("histogram", "attended-key counts per head as CSV");
  add_grid_args(c.histogram, o);
  c.histogram->add_option("--samples", o.samples, "batch samples per query")->capture_default_str();

  c.channel = app.add_subcommand("channel", "simulate Rayleigh channels to a binary file");
  add_ofdm_args(c.channel, o);
  c.channel->add_option("--realizations", o.realizations, "channel realizations (default 1)");

  c.beamform = app.add_subcommand("beamform", "per-realization sum-rate of one combiner");
  add_ofdm_args(c.beamform, o);
  add_link_args(c.beamform, o);
  c.beamform->add_option("--method", o.method)->check(CLI::IsMember({"zf", "mmse", "opt"}))->capture_default_str();
  c.beamform->add_option("--snr-db", o.snr_db)->capture_default_str();
  c.beamform->add_option("--realizations", o.realizations, "realizations (default 100)");
  c.beamform->add_option("--csv", o.csv, "CSV output path");

  c.sweep = app.add_subcommand("sweep", "sum-rate sweep over SNR, velocity and method");
  add_ofdm_args(c.sweep, o);
  add_link_args(c.sweep, o);
  c.sweep->add_option("--snr-db", o.snr_list, "SNR points [dB]")->delimiter(',');
  c.sweep->add_option("--velocities", o.velocity_ranges, "speed ranges as min:max [m/s]")->delimiter(',');
  c.sweep->add_option("--methods", o.methods)->delimiter(',')->check(CLI::IsMember({"zf", "mmse", "opt"}));
  c.sweep->add_option("--realizations", o.realizations, "realizations per point (default 500)");
  c.sweep->add_option("--format", o.format, "csv or json (default from --out extension)")
      ->check(CLI::IsMember({"csv", "json"}));
  return c;
}

// Output sink: the named file, or `fallback` when no path was given.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : path_(path) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) fail(Errc::io_error, "cannot open '" + path + "' for writing");
    }
    stream_ = path.empty() ? &fallback : &file_;
  }
  std::ostream& operator*() { return *stream_; }
  void finish() {
    stream_->flush();
    if (!*stream_) fail(Errc::io_error, "failed writing '" + (path_.empty() ? std::string("stdout") : path_) + "'");
  }

 private:
  std::string path_;
  std::ofstream file_;
  std::ostream* stream_ = nullptr;
};

OfdmConfig ofdm_from(const Options& o) {
  OfdmConfig ofdm;
  ofdm.symbols = o.symbols;
  ofdm.resource_blocks = o.resource_blocks;
  ofdm.subcarrier_spacing_hz = o.scs_hz;
  ofdm.tti_s = o.tti_s;
  ofdm.num_taps = o.taps;
  ofdm.delay_spread_s = o.delay_spread_s;
  return ofdm;
}

VelocityRange parse_range(const std::string& text) {
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) {
      const double v = std::stod(text);
      return {v, v};
    }
    return {std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1))};
  } catch (const std::exception&) {
    fail(Errc::invalid_argument, "velocity range '" + text + "' is not min:max");
  }
}

SweepConfig sweep_config_from(const Options& o, std::size_t default_realizations) {
  SweepConfig config;
  config.ofdm = ofdm_from(o);
  config.carrier_hz = o.carrier_hz;
  config.antennas = o.antennas;
  config.users = o.users;
  config.seed = o.seed;
  config.est_snr_db = o.est_snr_db;
  config.realizations = o.realizations == 0 ? default_realizations : o.realizations;
  config.optimizer.iterations = o.iterations;
  config.optimizer.gradient = o.gradient == "analytic" ? GradientMode::analytic : GradientMode::numeric;
  return config;
}

int run_masks(const Options& o, std::ostream& out) {
  MaskBuildOptions opts;
  opts.max_tokens = o.max_tokens;
  opts.causal = o.causal;
  const auto masks =
      o.pattern == "fixed" ? build_fixed_strided_masks(o.grid, opts) : build_doppler_masks(o.grid, opts);
  const auto check = validate_masks(masks);

  Sink sink(o.out, out);
  *sink << masks_to_json(masks) << '\n';
  sink.finish();
  if (!o.quiet && !o.out.empty()) {
    out << "pattern " << o.pattern << "  T=" << masks.tokens() << "  s=" << masks.global_stride() << '\n';
    for (std::size_t h = 0; h < masks.head_count(); ++h) {
      out << "  head " << h << ": " << masks.nnz(h) << " keys, " << check.empty_rows_per_head[h] << " empty rows\n";
    }
    out << "  queries with no key in any head: " << check.queries_with_empty_union << '\n';
  }
  return check.sorted_and_in_range ? kExitOk : kExitValidation;
}

void print_diameter(std::ostream& out, const char* label, const DiameterResult& d) {
  out << "  " << label << ": ";
  if (d.reachable) {
    out << "diameter " << d.diameter;
  } else {
    out << "UNREACHABLE (" << d.unreachable_pairs << " pairs)";
  }
  if (!d.exact) out << " [sampled " << d.sources_evaluated << " sources]";
  out << '\n';
}

int run_graph(const Options& o, std::ostream& out) {
  DiameterOptions opts;
  opts.max_all_pairs = o.max_all_pairs;
  opts.seed = o.seed;
  if (o.sample_sources > 0) {
    opts.allow_sampling = true;
    opts.sampled_sources = o.sample_sources;
  }
  const auto report = connectivity_report(o.grid, opts);

  const std::string& path = o.report.empty() ? o.out : o.report;
  if (!path.empty() || o.quiet) {
    Sink sink(path, out);
    *sink << report_to_json(report) << '\n';
    sink.finish();
  }
  if (!o.quiet) {
    out << "grid " << o.grid.L << "x" << o.grid.K << " p=" << o.grid.heads << " lambda=" << o.grid.lambda
        << "  s=" << report.global_stride << '\n';
    for (const auto& hb : report.heads) {
      out << "  head " << hb.head << ": stride_l=" << hb.strides.time << " stride_k=" << hb.strides.frequency
          << " P=" << hb.effective_step << " bridging=" << (hb.bridging_ok ? "yes" : "no") << '\n';
    }
    out << "  undirected components: " << report.undirected_components << '\n';
    if (o.mode != "undirected") print_diameter(out, "directed", report.directed);
    if (o.mode != "directed") print_diameter(out, "undirected", report.undirected);
    out << "  hop bound <= p: " << (report.hop_bound_satisfied ? "holds" : "exceeded") << '\n';
    out << (report.fully_connected() ? "fully connected\n" : "NOT fully connected\n");
  }

  bool ok = true;
  if (o.mode != "undirected") ok = ok && report.directed.reachable;
  if (o.mode != "directed") ok = ok && report.undirected.reachable;
  return ok ? kExitOk : kExitValidation;
}

int run_attn_check(const Options& o, std::ostream& out) {
  const auto masks = build_doppler_masks(o.grid);
  const std::size_t d = o.model_dim == 0 ? 2 * o.grid.heads : o.model_dim;
  const bool gradients = masks.tokens() <= 64 && d <= 16;

  double forward = 0.0, gradient = 0.0;
  std::string worst;
  for (std::size_t t = 0; t < o.trials; ++t) {
    const auto block = EmbeddingBlock::random(masks.tokens(), d, o.grid.heads, derive_seed(o.seed, t));
    const auto a = sparse_attention_forward(block, masks);
    const auto b = dense_masked_oracle(block, masks);
    forward = std::max(forward, (a.values - b.values).cwiseAbs().maxCoeff());
    if (gradients) {
      const auto g = gradient_check(block, masks);
      if (g.max_relative_error >= gradient) {
        gradient = g.max_relative_error;
        worst = g.worst_entry;
      }
    }
  }

  const bool ok = forward <= o.tolerance && (!gradients || gradient <= o.grad_tolerance);
  Sink sink(o.out, out);
  *sink << std::setprecision(3) << std::scientific;
  *sink << "trials " << o.trials << "  T=" << masks.tokens() << "  d=" << d << '\n';
  *sink << "max forward deviation " << forward << " (tolerance " << o.tolerance << ")\n";
  if (gradients) {
    *sink << "max gradient relative error " << gradient << " at " << worst << " (tolerance " << o.grad_tolerance
          << ")\n";
  } else {
    *sink << "gradient check skipped: needs T <= 64 and d <= 16\n";
  }
  *sink << (ok ? "PASS" : "FAIL") << '\n';
  sink.finish();
  return ok ? kExitOk : kExitValidation;
}

int run_histogram(const Options& o, std::ostream& out) {
  const auto masks = build_doppler_masks(o.grid);
  const auto report = attended_keys_histogram(masks, o.samples);
  Sink sink(o.out, out);
  *sink << histogram_to_csv(report);
  sink.finish();
  return kExitOk;
}

int run_channel(const Options& o, std::ostream& out) {
  if (o.out.empty()) fail(Errc::invalid_argument, "channel needs --out for the binary file");
  DopplerConfig doppler;
  doppler.carrier_hz = o.carrier_hz;
  doppler.v_min_mps = o.v_min;
  doppler.v_max_mps = o.v_max;
  const OfdmConfig ofdm = ofdm_from(o);
  const std::size_t count = o.realizations == 0 ? 1 : o.realizations;

  ChannelFile file;
  file.seed = o.seed;
  file.realizations.resize(count, ChannelBatch(0, 0, 0, 0));
  parallel_for(count, [&](std::size_t r) {
    file.realizations[r] = generate_channel(ofdm, doppler, o.antennas, o.users, derive_seed(o.seed, r));
  });

  std::ofstream stream(o.out, std::ios::binary);
  if (!stream) fail(Errc::io_error, "cannot open '" + o.out + "' for writing");
  write_channel_file(stream, file);
  if (!o.quiet) {
    out << "wrote " << count << " realizations of " << ofdm.symbols << "x" << ofdm.subcarriers() << "x" << o.antennas
        << "x" << o.users << " to " << o.out << '\n';
    out << "max Doppler " << max_doppler(o.v_max, o.carrier_hz) << " Hz, time-bias hint "
        << time_bias_hint(max_doppler(o.v_max, o.carrier_hz), ofdm.symbol_duration_s()) << '\n';
  }
  return kExitOk;
}

int run_beamform(const Options& o, std::ostream& out) {
  SweepConfig config = sweep_config_from(o, 100);
  config.snr_db = {o.snr_db};
  config.velocities = {{o.v_min, o.v_max}};
  config.methods = {method_from_string(o.method)};
  const auto samples = sample_point(config, 0, o.snr_db);

  Sink sink(o.csv.empty() ? o.out : o.csv, out);
  *sink << std::setprecision(12);
  *sink << "realization,method,snr_db,sum_rate_bpshz";
  for (std::size_t u = 0; u < config.users; ++u) *sink << ",sinr_db_ue" << u;
  *sink << '\n';
  std::vector<double> rates;
  for (std::size_t r = 0; r < samples.size(); ++r) {
    *sink << r << ',' << o.method << ',' << o.snr_db << ',' << samples[r].sum_rate[0];
    for (double g : samples[r].sinr[0]) *sink << ',' << 10.0 * std::log10(g);
    *sink << '\n';
    rates.push_back(samples[r].sum_rate[0]);
  }
  sink.finish();
  if (!o.quiet && !(o.csv.empty() && o.out.empty())) {
    out << o.method << " @ " << o.snr_db << " dB: mean sum-rate "
        << pairwise_sum(rates) / static_cast<double>(rates.size()) << " bps/Hz over " << rates.size()
        << " realizations\n";
  }
  return kExitOk;
}

int run_sweep_cmd(const Options& o, std::ostream& out) {
  SweepConfig config = sweep_config_from(o, 500);
  config.snr_db = o.snr_list;
  config.velocities.clear();
  for (const auto& text : o.velocity_ranges) config.velocities.push_back(parse_range(text));
  config.methods.clear();
  for (const auto& name : o.methods) config.methods.push_back(method_from_string(name));

  std::string format = o.format;
  if (format.empty()) format = o.out.size() >= 5 && o.out.ends_with(".json") ? "json" : "csv";
  const SweepResult result = run_sweep(config);

  Sink sink(o.out, out);
  *sink << (format == "json" ? sweep_to_json(result) + "\n" : sweep_to_csv(result));
  sink.finish();
  if (!o.quiet && !o.out.empty()) {
    out << result.points.size() << " points, " << result.metadata.channel_draws << " channel draws, "
        << result.metadata.singular_resamples << " singular resamples; seed " << result.metadata.seed << ", "
        << result.metadata.version << '\n';
  }
  return kExitOk;
}

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::resource_limit:
    case Errc::io_error: return kExitResource;
    case Errc::singular_channel:
    case Errc::degenerate: return kExitValidation;
    default: return kExitUsage;
  }
}

CLI::App* selected(CLI::App& app) {
  const auto subs = app.get_subcommands();
  return subs.empty() ? nullptr : subs.front();
}

// Flat `key = value` lines become `--key=value` tokens for options the user
// did not pass explicitly.
std::vector<std::string> config_tokens(CLI::App& app, const std::string& path) {
  std::ifstream probe(path);
  if (!probe) fail(Errc::io_error, "cannot read config file '" + path + "'");
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(probe);
  } catch (const CLI::ParseError& e) {
    fail(Errc::invalid_argument, "config file '" + path + "': " + e.what());
  }

  CLI::App* sub = selected(app);
  std::vector<std::string> tokens;
  for (const auto& item : items) {
    if (!item.parents.empty() || item.name == "++" || item.name == "--") continue;
    if (item.name == "config") fail(Errc::invalid_argument, "config files cannot include other config files");
    const std::string flag = "--" + item.name;
    const CLI::Option* opt = sub != nullptr ? sub->get_option_no_throw(flag) : nullptr;
    if (opt == nullptr) opt = app.get_option_no_throw(flag);
    if (opt == nullptr) {
      fail(Errc::invalid_argument, "config key '" + item.name + "' is not an option of '" +
                                       (sub != nullptr ? sub->get_name() : std::string("dsparse")) + "'");
    }
    if (opt->count() > 0) continue;
    for (const auto& value : item.inputs) tokens.push_back(flag + "=" + value);
  }
  return tokens;
}

int dispatch(const Options& o, const Commands& c, CLI::App& app, std::ostream& out) {
  CLI::App* sub = selected(app);
  if (sub == c.masks) return run_masks(o, out);
  if (sub == c.graph) return run_graph(o, out);
  if (sub == c.attn) return run_attn_check(o, out);
  if (sub == c.histogram) return run_histogram(o, out);
  if (sub == c.channel) return run_channel(o, out);
  if (sub == c.beamform) return run_beamform(o, out);
  return run_sweep_cmd(o, out);
}

int parse_and_run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  std::reverse(args.begin(), args.end());
  const std::string program = args.empty() ? "dsparse" : args.back();
  if (!args.empty()) args.pop_back();

  auto first = std::make_unique<CLI::App>("Doppler-aware sparse attention and beamforming toolkit", program);
  auto options = std::make_unique<Options>();
  auto commands = build_app(*first, *options);
  try {
    first->parse(std::vector<std::string>(args));
  } catch (const CLI::ParseError& e) {
    return first->exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  if (!options->config.empty()) {
    const auto extra = config_tokens(*first, options->config);
    if (!extra.empty()) {
      // CLI11 consumes the vector back to front.
      std::vector<std::string> merged(extra.rbegin(), extra.rend());
      merged.insert(merged.end(), args.begin(), args.end());
      first = std::make_unique<CLI::App>("Doppler-aware sparse attention and beamforming toolkit", program);
      options = std::make_unique<Options>();
      commands = build_app(*first, *options);
      try {
        first->parse(merged);
      } catch (const CLI::ParseError& e) {
        err << "in config file '" << options->config << "': ";
        return first->exit(e, out, err) == 0 ? kExitOk : kExitUsage;
      }
    }
  }
  return dispatch(*options, commands, *first, out);
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return parse_and_run(args, out, err);
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitResource;
  }
}

}  // namespace dsparse
