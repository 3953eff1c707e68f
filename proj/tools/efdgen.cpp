// efdgen: command-line front end for the phantom video pipeline.
//
// Every command reads defaults, then --config FILE (key=value lines), then
// flags, and writes manifest_<command>.json into the output directory.
// Exit status: 0 success, 1 validation error, 2 runtime error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "efdgen/efdgen.hpp"

namespace fs = std::filesystem;
using namespace efdgen;
using pipeline::PipelineConfig;
using pipeline::RunManifest;
using pipeline::StageTimer;

namespace {

struct FlagSpec {
  const char* flag;
  const char* key;
  const char* help;
};

constexpr FlagSpec kFlags[] = {
    {"--input", "input", "Input directory, or fixture:pulsating|ellipses|squares"},
    {"--output", "output", "Output directory"},
    {"--model", "model", "Model checkpoint (.efdm)"},
    {"--reference", "reference", "Directory of videos to compare against"},
    {"-d,--d", "d", "Harmonic order"},
    {"--d-max", "d_max", "Largest order considered by select-d"},
    {"-n,--n", "n", "Contour points per frame"},
    {"-k,--k", "k", "Diffusion steps"},
    {"--t-win", "t_win", "Window length in frames"},
    {"--stride", "stride", "Window stride"},
    {"--canvas", "canvas", "Canvas side in pixels"},
    {"--fraction", "fraction", "Cumulative power fraction for select-d"},
    {"--test-fraction", "test_fraction", "Fraction of windows assigned to the test split"},
    {"--s-min", "s_min", "Solidity threshold"},
    {"--o-max", "o_max", "Overlap threshold"},
    {"--border-px", "border_px", "Allowed border contact in pixels"},
    {"--count", "count", "Videos to generate"},
    {"--replications", "replications", "Evaluation replications"},
    {"--d-values", "d_values", "Comma-separated orders for ablate"},
    {"--fixture-count", "fixture_count", "Videos per bundled fixture"},
    {"--fixture-length", "fixture_length", "Frames per bundled fixture video"},
    {"--pairwise", "pairwise", "Also report per-video pairwise Diff (0/1)"},
    {"--seed", "seed", "Random seed"},
    {"--threads", "threads", "Worker thread cap"},
    {"--lambda1", "lambda1", "Time-domain loss weight"},
    {"--lambda2", "lambda2", "Frequency-domain loss weight"},
    {"--batch-size", "batch_size", "Training batch size"},
    {"--train-steps", "train_steps", "Training step budget"},
    {"--learning-rate", "learning_rate", "Peak learning rate"},
    {"--warmup-steps", "warmup_steps", "Learning-rate warmup steps"},
    {"--ema-decay", "ema_decay", "EMA decay"},
    {"--log-every", "log_every", "Training log interval"},
    {"--width", "width", "Denoiser width"},
    {"--heads", "heads", "Attention heads"},
    {"--blocks", "blocks", "Attention blocks"},
};

struct Command {
  CLI::App* app = nullptr;
  std::string config_file;
  std::map<std::string, std::string> values;
  std::vector<std::string> sets;
};

void add_common(Command& c) {
  c.app->add_option("--config", c.config_file, "key=value configuration file")->check(CLI::ExistingFile);
  for (const auto& f : kFlags) c.app->add_option(f.flag, c.values[f.key], f.help);
  c.app->add_option("--set", c.sets, "Extra key=value override (repeatable)");
}

PipelineConfig resolve(const Command& c) {
  std::map<std::string, std::string> overrides;
  for (const auto& f : kFlags)
    if (c.app->count(std::string(f.flag).substr(std::string(f.flag).rfind(',') + 1)) > 0)
      overrides[f.key] = c.values.at(f.key);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    require(eq != std::string::npos, ErrorCode::InvalidConfig, "--set expects key=value, got '" + s + "'");
    overrides[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return pipeline::load_config(c.config_file, overrides);
}

void warn_all(RunManifest& m, const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) {
    std::cerr << "warning: " << w << '\n';
    m.warning(w);
  }
}

std::string numbered(const char* prefix, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%04zu%s", prefix, i, ext);
  return buf;
}

// ---------------------------------------------------------------------------

void cmd_prep(const PipelineConfig& cfg, RunManifest& m) {
  const fs::path out(cfg.output);
  std::vector<std::string> warnings;
  LabeledVideo video;
  {
    StageTimer t(m, "ingest");
    require(!cfg.input.empty(), ErrorCode::InvalidConfig, "prep needs --input");
    video = ingest_ctc(cfg.input, &warnings);
  }
  pipeline::PrepResult res;
  {
    StageTimer t(m, "filter_window_split");
    res = pipeline::prep(video, cfg, out, &warnings);
  }
  warn_all(m, warnings);
  m.artifact(out / "split_manifest.txt");
  for (const auto& side : {"train", "test"})
    for (const auto& e : fs::directory_iterator(out / "windows" / side)) m.artifact(e.path());
  m.note("tracks", res.tracks);
  m.note("windows", res.windows);
  m.note("train_windows", res.split.train_windows);
  m.note("test_windows", res.split.test_windows);
  std::cout << "tracks " << res.tracks << ", windows " << res.windows << " (train " << res.split.train_windows
            << ", test " << res.split.test_windows << ")\n";
}

void cmd_encode(const PipelineConfig& cfg, RunManifest& m) {
  const fs::path out = fs::path(cfg.output) / "series";
  std::vector<std::string> warnings;
  std::map<std::string, std::vector<MaskVideo>> splits;
  const fs::path in(cfg.input);
  if (cfg.input.rfind("fixture:", 0) != 0 && fs::is_directory(in / "windows" / "train")) {
    splits["train"] = ingest_mvb(in / "windows" / "train", &warnings);
    if (fs::is_directory(in / "windows" / "test") && !fs::is_empty(in / "windows" / "test"))
      splits["test"] = ingest_mvb(in / "windows" / "test", &warnings);
  } else {
    splits["train"] = pipeline::load_videos(cfg.input, cfg, &warnings);
  }
  std::map<std::string, std::vector<EfdSeries>> series;
  {
    StageTimer t(m, "encode");
    for (const auto& [side, videos] : splits) series[side] = pipeline::encode_all(videos, cfg.d, cfg.n, &warnings);
  }
  const auto stats = fit_norm(series.at("train"));
  for (const auto& [side, list] : series) {
    fs::create_directories(out / side);
    for (std::size_t i = 0; i < list.size(); ++i) {
      const auto p = out / side / numbered("s", i, ".csv");
      pipeline::save_series(p, list[i]);
      m.artifact(p);
    }
  }
  pipeline::write_series_meta(out / "meta.txt", {cfg.d, series.at("train").front().length(), cfg.n, true, stats});
  m.artifact(out / "meta.txt");
  warn_all(m, warnings);
  m.note("train_series", series.at("train").size());
  std::cout << "encoded " << series.at("train").size() << " training series at d = " << cfg.d << '\n';
}

void cmd_select_d(const PipelineConfig& cfg, RunManifest& m) {
  std::vector<std::string> warnings;
  const auto videos = pipeline::load_videos(cfg.input, cfg, &warnings);
  std::vector<EfdSeries> series;
  {
    StageTimer t(m, "encode");
    series = pipeline::encode_all(videos, cfg.d_max, cfg.n, &warnings);
  }
  const auto power = harmonic_power(series);
  const int d = select_harmonics(series, cfg.fraction);
  const fs::path out(cfg.output);
  fs::create_directories(out);
  {
    std::ofstream os(out / "harmonic_power.csv");
    os << "n,power,cumulative_fraction\n" << std::setprecision(12);
    double total = 0.0, acc = 0.0;
    for (double p : power) total += p;
    for (std::size_t i = 0; i < power.size(); ++i) {
      acc += power[i];
      os << i + 1 << ',' << power[i] << ',' << acc / total << '\n';
    }
  }
  m.artifact(out / "harmonic_power.csv");
  warn_all(m, warnings);
  m.note("d", d);
  std::cout << "d = " << d << '\n';
}

// Training input: an encode output directory, or videos encoded on the fly.
void cmd_train(const PipelineConfig& cfg, RunManifest& m) {
  std::vector<std::string> warnings;
  std::vector<EfdSeries> series;
  const fs::path in(cfg.input);
  int n = cfg.n;
  if (cfg.input.rfind("fixture:", 0) != 0 && fs::exists(in / "series" / "meta.txt")) {
    const auto meta = pipeline::read_series_meta(in / "series" / "meta.txt");
    series = pipeline::load_series_dir(in / "series" / "train");
    n = meta.n;
  } else {
    StageTimer t(m, "encode");
    series = pipeline::encode_all(pipeline::load_videos(cfg.input, cfg, &warnings), cfg.d, cfg.n, &warnings);
  }
  auto run_cfg = cfg;
  run_cfg.n = n;
  std::vector<diffusion::TrainRecord> log;
  pipeline::Generator gen;
  {
    StageTimer t(m, "train");
    gen = pipeline::fit_generator(series, run_cfg, &log, [&](const diffusion::TrainRecord& r) {
      if (r.step % 100 == 0) std::cerr << "step " << r.step << " loss " << r.loss << '\n';
    });
  }
  const fs::path out(cfg.output);
  fs::create_directories(out);
  diffusion::save_checkpoint(out / "model.efdm", pipeline::generator_checkpoint(gen, series.front().length()));
  {
    std::ofstream os(out / "training_log.csv");
    diffusion::write_training_log(os, log);
  }
  m.artifact(out / "model.efdm");
  m.artifact(out / "training_log.csv");
  warn_all(m, warnings);
  m.note("parameters", gen.model.parameter_count());
  m.note("final_loss", log.empty() ? 0.0 : log.back().loss);
  std::cout << "trained " << gen.model.parameter_count() << " parameters on " << series.size() << " series\n";
}

void cmd_generate(const PipelineConfig& cfg, RunManifest& m) {
  require(!cfg.model.empty(), ErrorCode::InvalidConfig, "generate needs --model");
  const auto gen = pipeline::generator_from_checkpoint(diffusion::load_checkpoint(cfg.model));
  const fs::path out = fs::path(cfg.output) / "generated";
  fs::create_directories(out);
  pipeline::DecodeStats ds;
  std::vector<MaskVideo> videos;
  {
    StageTimer t(m, "sample_decode");
    videos = gen.generate(cfg.count, cfg.seed, cfg.canvas, &ds, cfg.threads);
  }
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const auto p = out / numbered("synth_", i, ".mvb");
    io::save_mvb(p, videos[i]);
    m.artifact(p);
  }
  m.note("frames", ds.frames);
  m.note("clamped_frames", ds.clamped_frames);
  m.note("degenerate_frames", ds.degenerate_frames);
  m.note("self_intersecting_frames", ds.self_intersecting_frames);
  m.note("repaired_frames", ds.repaired_frames);
  std::cout << "generated " << videos.size() << " videos into " << out.string() << '\n';
}

// Raw-domain series CSVs -> MVB videos.
void cmd_decode(const PipelineConfig& cfg, RunManifest& m) {
  require(!cfg.input.empty(), ErrorCode::InvalidConfig, "decode needs --input");
  const fs::path in(cfg.input);
  std::vector<fs::path> files;
  if (fs::is_regular_file(in)) {
    files.push_back(in);
  } else {
    for (const auto& e : fs::directory_iterator(in))
      if (e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  require(!files.empty(), ErrorCode::EmptyDataset, "no series to decode in " + in.string());
  const fs::path out = fs::path(cfg.output) / "decoded";
  fs::create_directories(out);
  StageTimer t(m, "decode");
  for (const auto& f : files) {
    const auto video = pipeline::decode_series(pipeline::load_series(f), cfg.canvas, cfg.n);
    const auto p = out / (f.stem().string() + ".mvb");
    io::save_mvb(p, video);
    m.artifact(p);
  }
  std::cout << "decoded " << files.size() << " series\n";
}

void cmd_evaluate(const PipelineConfig& cfg, RunManifest& m) {
  std::vector<std::string> warnings;
  const auto real = pipeline::load_videos(cfg.input, cfg, &warnings);
  metrics::EvalReport rep;
  std::vector<MaskVideo> synth_fixed;
  {
    StageTimer t(m, "evaluate");
    if (!cfg.model.empty()) {
      const auto gen = pipeline::generator_from_checkpoint(diffusion::load_checkpoint(cfg.model));
      rep = metrics::evaluate(
          real, [&](std::uint64_t s) { return gen.generate(cfg.count, s, cfg.canvas, nullptr, cfg.threads); },
          cfg.replications, cfg.seed);
    } else {
      require(!cfg.reference.empty(), ErrorCode::InvalidConfig, "evaluate needs --reference or --model");
      synth_fixed = pipeline::load_videos(cfg.reference, cfg, &warnings);
      rep = metrics::evaluate(real, synth_fixed);
    }
  }
  const fs::path out(cfg.output);
  fs::create_directories(out);
  {
    std::ofstream os(out / "report.txt");
    metrics::write_report_table(os, rep);
  }
  {
    std::ofstream os(out / "report.csv");
    metrics::write_report_csv(os, rep);
  }
  {
    std::ofstream os(out / "curves.csv");
    metrics::write_curves_csv(os, rep);
  }
  {
    std::ofstream os(out / "curves.svg");
    metrics::write_curves_svg(os, rep);
  }
  for (const char* f : {"report.txt", "report.csv", "curves.csv", "curves.svg"}) m.artifact(out / f);
  if (cfg.pairwise && !synth_fixed.empty()) {
    const auto a = metrics::dataset_features(real), b = metrics::dataset_features(synth_fixed);
    for (auto f : metrics::kFeatures) m.note(std::string("pairwise_diff_") + metrics::feature_name(f), metrics::pairwise_diff(a, b, f));
  }
  warn_all(m, warnings);
  metrics::write_report_table(std::cout, rep);
}

void cmd_ablate(const PipelineConfig& cfg, RunManifest& m) {
  std::vector<std::string> warnings;
  auto videos = pipeline::load_videos(cfg.input, cfg, &warnings);
  require(videos.size() >= 2, ErrorCode::EmptyDataset, "ablate needs at least two videos");
  const auto held = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.test_fraction * videos.size()));
  std::vector<MaskVideo> held_out(videos.end() - static_cast<long>(held), videos.end());
  videos.resize(videos.size() - held);
  std::vector<pipeline::AblationRow> rows;
  {
    StageTimer t(m, "sweep");
    rows = pipeline::ablation_sweep(videos, held_out, cfg, &warnings, [](int d) { std::cerr << "d = " << d << '\n'; });
  }
  const fs::path out(cfg.output);
  fs::create_directories(out);
  {
    std::ofstream os(out / "ablation.csv");
    pipeline::write_ablation_csv(os, rows);
  }
  m.artifact(out / "ablation.csv");
  warn_all(m, warnings);
  pipeline::write_ablation_csv(std::cout, rows);
}

void cmd_fixtures(const PipelineConfig& cfg, RunManifest& m) {
  require(cfg.input.rfind("fixture:", 0) == 0, ErrorCode::InvalidConfig, "fixtures needs --input fixture:<name>");
  const auto videos = pipeline::load_videos(cfg.input, cfg);
  const fs::path out = fs::path(cfg.output) / cfg.input.substr(8);
  fs::create_directories(out);
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const auto p = out / numbered("v", i, ".mvb");
    io::save_mvb(p, videos[i]);
    m.artifact(p);
  }
  std::cout << "wrote " << videos.size() << " videos to " << out.string() << '\n';
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidArgument:
      return 1;
    default:
      return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cell phantom videos from elliptical Fourier descriptor time series"};
  app.require_subcommand(1);

  using Handler = void (*)(const PipelineConfig&, RunManifest&);
  const std::vector<std::tuple<const char*, const char*, Handler>> commands = {
      {"prep", "Filter, window and split a CTC-style labelled video", cmd_prep},
      {"encode", "Encode mask videos as EFD series", cmd_encode},
      {"select-d", "Pick the harmonic order from the power spectrum", cmd_select_d},
      {"train", "Train the diffusion denoiser", cmd_train},
      {"generate", "Sample and rasterize new phantom videos", cmd_generate},
      {"decode", "Rasterize EFD series files", cmd_decode},
      {"evaluate", "Compare two datasets by morphological features", cmd_evaluate},
      {"ablate", "Sweep the harmonic order", cmd_ablate},
      {"fixtures", "Write a bundled synthetic dataset", cmd_fixtures},
  };
  std::vector<Command> parsed(commands.size());
  for (std::size_t i = 0; i < commands.size(); ++i) {
    parsed[i].app = app.add_subcommand(std::get<0>(commands[i]), std::get<1>(commands[i]));
    add_common(parsed[i]);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  for (std::size_t i = 0; i < commands.size(); ++i) {
    if (!parsed[i].app->parsed()) continue;
    const std::string name = std::get<0>(commands[i]);
    PipelineConfig cfg;
    try {
      cfg = resolve(parsed[i]);
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << '\n';
      RunManifest man(name, cfg);
      man.fail(e.what_code(), e.what());
      man.write(cfg.output);
      return 1;
    }
    RunManifest man(name, cfg);
    int rc = 0;
    try {
      cfg.validate();
      std::get<2>(commands[i])(cfg, man);
      man.succeed();
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << '\n';
      man.fail(e.what_code(), e.what());
      rc = exit_code_for(e.code());
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      man.fail("runtime", e.what());
      rc = 2;
    }
    try {
      man.write(cfg.output);
    } catch (const std::exception& e) {
      std::cerr << "warning: could not write run manifest: " << e.what() << '\n';
    }
    return rc;
  }
  return 1;
}
