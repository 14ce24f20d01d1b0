// masa-kit: decay dumps, model statistics, attention scaling benchmarks and
// the desk-scale training demo.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "masa/attention.hpp"
#include "masa/blocks/model.hpp"
#include "masa/core/autograd.hpp"
#include "masa/core/error.hpp"
#include "masa/core/ops.hpp"
#include "masa/core/parallel.hpp"
#include "masa/decay.hpp"
#include "masa/simd/kernels.hpp"
#include "masa/train/loop.hpp"

namespace {

using namespace masa;

constexpr std::size_t kMaxSide = 96;

std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

void write_matrix_csv(const Tensor& m, const std::string& path) {
  auto out = open_out(path);
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  const auto& d = m.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c != 0) out << ',';
      out << fmt_double(d[r * cols + c]);
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

std::string sibling_path(const std::string& path, const std::string& suffix) {
  std::filesystem::path p(path);
  const std::string stem = p.stem().string();
  const std::string ext = p.has_extension() ? p.extension().string() : ".csv";
  return (p.parent_path() / (stem + suffix + ext)).string();
}

// ---------------------------------------------------------------------------

struct DumpArgs {
  std::size_t height = 0, width = 0;
  double gamma = 0.9;
  std::string out;
  bool decomposed = false;
  bool kron_check = false;
};

int run_dump_decay(const DumpArgs& a) {
  const GridShape grid{a.height, a.width};
  const Tensor d2 = decay_manhattan_2d(grid, a.gamma);
  write_matrix_csv(d2, a.out);
  std::cout << "wrote " << grid.tokens() << "x" << grid.tokens() << " decay matrix to " << a.out << '\n';
  const AxialDecay axial = decay_axial_pair(grid, a.gamma);
  if (a.decomposed) {
    const std::string h = sibling_path(a.out, "_h"), w = sibling_path(a.out, "_w");
    write_matrix_csv(axial.height, h);
    write_matrix_csv(axial.width, w);
    std::cout << "wrote axial pair to " << h << " and " << w << '\n';
  }
  if (a.kron_check) {
    const double diff = max_abs_diff(kronecker(axial.height, axial.width), d2);
    std::cout << "kron(DH, DW) vs D2d max abs diff: " << fmt_double(diff) << '\n';
    if (!(diff < 1e-12)) throw NumericError("decay factorization check failed");
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct StatsArgs {
  std::string preset;
  std::string config;
  std::size_t resolution = 224;
};

std::string with_commas(std::uint64_t v) {
  std::string s = std::to_string(v);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

int run_model_stats(const StatsArgs& a) {
  ModelConfig config = a.config.empty() ? preset(a.preset) : load_config(a.config);
  const std::string name = a.config.empty() ? a.preset : a.config;
  const CostBreakdown params = param_breakdown(config);
  const CostBreakdown flops = flops_breakdown(config, a.resolution);

  std::cout << "model " << name << " at " << a.resolution << "x" << a.resolution << '\n';
  std::cout << std::fixed << std::setprecision(3);
  std::cout << "params: " << with_commas(params.total()) << " (" << params.total() / 1e6 << " M)\n";
  std::cout << "flops:  " << with_commas(flops.total()) << " MACs (" << flops.total() / 1e9 << " G)\n";
  if (a.config.empty() && a.preset != "tiny") {
    const ReferenceCost ref = reference_cost(a.preset);
    const double dp = 100.0 * (params.total() / 1e6 - ref.params_m) / ref.params_m;
    std::cout << "reference: " << ref.params_m << " M params (" << std::showpos << dp << std::noshowpos << "%)";
    if (a.resolution == 224) {
      const double df = 100.0 * (flops.total() / 1e9 - ref.gflops) / ref.gflops;
      std::cout << ", " << ref.gflops << " GFLOPs (" << std::showpos << df << std::noshowpos << "%)";
    }
    std::cout << '\n';
  }

  std::cout << '\n' << std::left << std::setw(12) << "part" << std::right << std::setw(8) << "grid"
            << std::setw(8) << "blocks" << std::setw(10) << "channels" << std::setw(7) << "heads"
            << std::setw(8) << "mode" << std::setw(16) << "params" << std::setw(18) << "flops" << '\n';
  auto row = [](const std::string& part, const std::string& grid, const std::string& blocks,
                const std::string& ch, const std::string& heads, const std::string& mode, std::uint64_t p,
                std::uint64_t f) {
    std::cout << std::left << std::setw(12) << part << std::right << std::setw(8) << grid << std::setw(8)
              << blocks << std::setw(10) << ch << std::setw(7) << heads << std::setw(8) << mode
              << std::setw(16) << with_commas(p) << std::setw(18) << with_commas(f) << '\n';
  };
  std::size_t side = a.resolution / 4;
  row("stem", std::to_string(side), "-", std::to_string(config.stages[0].channels), "-", "conv", params.stem,
      flops.stem);
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const StageConfig& st = config.stages[s];
    if (s > 0) {
      side /= 2;
      row("downsample", std::to_string(side), "-", std::to_string(st.channels), "-", "conv",
          params.downsamples[s - 1], flops.downsamples[s - 1]);
    }
    row("stage" + std::to_string(s + 1), std::to_string(side), std::to_string(st.num_blocks),
        std::to_string(st.channels), std::to_string(st.heads), st.decomposed ? "axial" : "full", params.stages[s],
        flops.stages[s]);
  }
  row("head", "1", "-", std::to_string(config.num_classes), "-", "linear", params.head, flops.head);
  return 0;
}

// ---------------------------------------------------------------------------

struct ScalingArgs {
  std::vector<std::string> modes{"full", "decomposed", "vanilla"};
  std::vector<std::size_t> sides{4, 8, 16};
  std::size_t head_dim = 32;
  std::size_t repeats = 3;
  double gamma = 0.9;
  std::uint64_t seed = 0;
  std::string out;
  bool omit_timing = false;
};

struct BenchRecord {
  std::string mode;
  std::size_t height, width, head_dim;
  std::uint64_t analytic_macs;
  std::uint64_t measured_macs;
  std::uint64_t wall_ns;
};

Tensor random_tokens(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(n * d);
  for (double& x : v) x = dist(rng);
  return Tensor::from({n, d}, std::move(v));
}

int run_scaling(const ScalingArgs& a) {
  if (a.repeats < 3) throw UsageError("--repeats must be at least 3");
  if (a.head_dim == 0) throw UsageError("--head-dim must be positive");
  for (std::size_t s : a.sides) {
    if (s < 2) throw UsageError("grid sides must be at least 2, got " + std::to_string(s));
    if (s > kMaxSide) {
      throw UsageError("grid side " + std::to_string(s) + " exceeds the cap of " + std::to_string(kMaxSide) +
                       " (full attention memory grows with side^4)");
    }
  }
  for (const std::string& m : a.modes) {
    if (m != "full" && m != "decomposed" && m != "vanilla") {
      throw UsageError("unknown mode '" + m + "'; expected full, decomposed or vanilla");
    }
  }

  NoGradGuard no_grad;
  const Decay decay = Decay::rate(a.gamma);
  std::vector<BenchRecord> records;
  for (const std::string& mode : a.modes) {
    for (std::size_t side : a.sides) {
      const GridShape grid{side, side};
      std::mt19937_64 rng(a.seed + side);
      const Tensor q = random_tokens(rng, grid.tokens(), a.head_dim);
      const Tensor k = random_tokens(rng, grid.tokens(), a.head_dim);
      const Tensor v = random_tokens(rng, grid.tokens(), a.head_dim);
      auto run = [&] {
        if (mode == "full") return masa_full(q, k, v, grid, decay);
        if (mode == "decomposed") return masa_decomposed(q, k, v, grid, decay);
        return softmax_attention(q, k, v);
      };
      const std::uint64_t analytic =
          mode == "decomposed" ? masa_decomposed_macs(grid, a.head_dim) : masa_full_macs(grid, a.head_dim);
      MacCounter counter;
      run();  // warmup, also the instrumented pass
      const std::uint64_t measured = counter.count();
      if (measured != analytic) {
        throw NumericError("MAC mismatch for " + mode + " at side " + std::to_string(side) + ": analytic " +
                           std::to_string(analytic) + ", measured " + std::to_string(measured));
      }
      std::vector<std::uint64_t> times;
      for (std::size_t r = 0; r < a.repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        run();
        const auto t1 = std::chrono::steady_clock::now();
        times.push_back(static_cast<std::uint64_t>(
            std::max<std::int64_t>(1, std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count())));
      }
      std::nth_element(times.begin(), times.begin() + static_cast<long>(times.size() / 2), times.end());
      records.push_back({mode, side, side, a.head_dim, analytic, measured, times[times.size() / 2]});
      std::cerr << mode << " " << side << "x" << side << ": " << analytic << " MACs, "
                << records.back().wall_ns << " ns\n";
    }
  }

  auto out = open_out(a.out);
  out << "mode,height,width,head_dim,analytic_macs,measured_macs" << (a.omit_timing ? "" : ",wall_ns")
      << ",threads,simd\n";
  for (const BenchRecord& r : records) {
    out << r.mode << ',' << r.height << ',' << r.width << ',' << r.head_dim << ',' << r.analytic_macs << ','
        << r.measured_macs;
    if (!a.omit_timing) out << ',' << r.wall_ns;
    out << ',' << worker_count() << ',' << simd::kernels().name << '\n';
  }
  if (!out) throw IoError("failed writing " + a.out);
  std::cout << "wrote " << records.size() << " records to " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::uint64_t seed = 7;
  std::uint64_t steps = 300;
  std::string out;
};

int run_train_demo(const TrainArgs& a) {
  TrainConfig config;
  config.seed = a.seed;
  config.steps = a.steps;
  const TrainMetrics metrics = train_loop(config);
  auto out = open_out(a.out);
  write_metrics_csv(metrics, out);
  if (!out) throw IoError("failed writing " + a.out);
  std::cout << std::setprecision(6) << "initial loss " << metrics.initial.loss << ", accuracy "
            << metrics.initial.train_accuracy << '\n';
  std::cout << "final   loss " << metrics.last().loss << ", accuracy " << metrics.last().train_accuracy
            << " after " << metrics.last().step << " steps\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"masa-kit: Manhattan self-attention toolkit"};
  app.require_subcommand(1);

  DumpArgs dump;
  auto* dump_cmd = app.add_subcommand("dump-decay", "Write the Manhattan decay matrix as CSV");
  dump_cmd->add_option("--height", dump.height, "Grid rows")->required();
  dump_cmd->add_option("--width", dump.width, "Grid columns")->required();
  dump_cmd->add_option("--gamma", dump.gamma, "Decay rate in (0, 1)")->required();
  dump_cmd->add_option("--out", dump.out, "Output CSV path")->required();
  dump_cmd->add_flag("--decomposed", dump.decomposed, "Also write the axial pair as <out>_h / <out>_w");
  dump_cmd->add_flag("--kron-check", dump.kron_check, "Verify kron(DH, DW) equals the 2D decay");

  StatsArgs stats;
  auto* stats_cmd = app.add_subcommand("model-stats", "Parameter and FLOPs accounting");
  auto* preset_opt = stats_cmd->add_option("--preset", stats.preset, "rmt-t, rmt-s, rmt-b, rmt-l or tiny");
  auto* config_opt = stats_cmd->add_option("--config", stats.config, "Model config JSON file");
  preset_opt->excludes(config_opt);
  stats_cmd->add_option("--resolution", stats.resolution, "Input resolution")->capture_default_str();

  ScalingArgs scaling;
  auto* scaling_cmd = app.add_subcommand("scaling", "Full vs decomposed attention cost by grid side");
  scaling_cmd->add_option("--modes", scaling.modes, "full, decomposed, vanilla")->delimiter(',')->capture_default_str();
  scaling_cmd->add_option("--sides", scaling.sides, "Square grid sides")->delimiter(',')->capture_default_str();
  scaling_cmd->add_option("--head-dim", scaling.head_dim, "Head dimension")->capture_default_str();
  scaling_cmd->add_option("--repeats", scaling.repeats, "Timed repeats (>= 3)")->capture_default_str();
  scaling_cmd->add_option("--gamma", scaling.gamma, "Decay rate")->capture_default_str();
  scaling_cmd->add_option("--seed", scaling.seed, "Input seed")->capture_default_str();
  scaling_cmd->add_option("--out", scaling.out, "Output CSV path")->required();
  scaling_cmd->add_flag("--omit-timing", scaling.omit_timing, "Leave out wall_ns for byte-stable output");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train-demo", "Train the tiny preset on synthetic data");
  train_cmd->add_option("--seed", train.seed, "Seed")->capture_default_str();
  train_cmd->add_option("--steps", train.steps, "Optimizer steps")->capture_default_str();
  train_cmd->add_option("--out", train.out, "Metrics CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*dump_cmd) return run_dump_decay(dump);
    if (*stats_cmd) {
      if (stats.preset.empty() && stats.config.empty()) {
        throw UsageError("model-stats needs --preset or --config");
      }
      return run_model_stats(stats);
    }
    if (*scaling_cmd) return run_scaling(scaling);
    if (*train_cmd) return run_train_demo(train);
  } catch (const std::exception& e) {
    std::cerr << "masa-kit: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
