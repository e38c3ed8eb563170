#include "tedi/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "tedi/bvh.hpp"
#include "tedi/checkpoint.hpp"
#include "tedi/dataset.hpp"
#include "tedi/metrics.hpp"
#include "tedi/sampler.hpp"
#include "tedi/trainer.hpp"

namespace tedi::cli {

using motion::FeatureMatrix;

void write_features_csv(std::ostream& os, const FeatureMatrix& frames) {
  const auto old = os.precision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index c = 0; c < frames.cols(); ++c) os << (c ? "," : "") << 'f' << c;
  os << '\n';
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    for (Eigen::Index c = 0; c < frames.cols(); ++c) os << (c ? "," : "") << frames(t, c);
    os << '\n';
  }
  os.precision(old);
}

namespace {

// Rows of comma-separated numbers; a first line that does not parse as
// numbers is taken as a header.
std::vector<std::vector<double>> read_numeric_csv(std::istream& is, const std::string& what) {
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool ok = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t\r", used) != std::string::npos) ok = false;
      } catch (const std::logic_error&) {
        ok = false;
      }
      if (!ok) break;
    }
    if (!ok) {
      if (rows.empty() && lineno == 1) continue;  // header
      throw ParseError(what + ": non-numeric field", lineno);
    }
    if (!rows.empty() && row.size() != rows[0].size()) {
      throw ParseError(what + ": expected " + std::to_string(rows[0].size()) + " fields, got " +
                           std::to_string(row.size()),
                       lineno);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

FeatureMatrix to_matrix(const std::vector<std::vector<double>>& rows) {
  FeatureMatrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t c = 0; c < rows[t].size(); ++c) m(t, c) = rows[t][c];
  }
  return m;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return is;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path + " for writing");
  return os;
}

// A BVH clip resampled to the checkpoint's rate and checked against its skeleton.
motion::MotionClip load_clip_for(const std::string& path, const io::Checkpoint& ckpt, double scale) {
  data::BvhOptions opts;
  opts.scale = scale;
  motion::MotionClip clip = data::bvh_to_clip_at(data::read_bvh_file(path, opts), static_cast<int>(ckpt.fps));
  if (clip.skeleton->joint_count() != ckpt.skeleton->joint_count()) {
    throw ValidationError(path + ": skeleton has " + std::to_string(clip.skeleton->joint_count()) +
                          " joints, checkpoint expects " + std::to_string(ckpt.skeleton->joint_count()));
  }
  clip.skeleton = ckpt.skeleton;
  return clip;
}

struct GenerateOptions {
  std::string checkpoint;
  std::string primer;
  std::int64_t frames = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::string features_out;
  int buffer_k = 0;
  bool deterministic = false;
  bool literal = false;
  int gap = 5;
  double scale = 1.0;
};

void add_generate_options(CLI::App* app, GenerateOptions& o, bool frames_required) {
  app->add_option("--checkpoint", o.checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  app->add_option("--primer", o.primer, "BVH whose first K frames seed the buffer")->required()->check(CLI::ExistingFile);
  auto* f = app->add_option("--frames", o.frames, "Number of frames to generate");
  if (frames_required) f->required();
  app->add_option("--seed", o.seed, "Random seed");
  app->add_option("--out", o.out, "Output BVH")->required();
  app->add_option("--features-out", o.features_out, "Also write raw features as CSV");
  app->add_option("--buffer-k", o.buffer_k, "Expected buffer length; must equal the checkpoint's K");
  app->add_flag("--deterministic", o.deterministic, "Posterior mean only, no sampling noise");
  app->add_flag("--literal", o.literal, "Shift re-noised clean predictions instead of posterior steps");
  app->add_option("--gap", o.gap, "Buffer positions closer than this to the head are never overwritten");
  app->add_option("--scale", o.scale, "BVH units to meters");
}

struct Generation {
  io::Checkpoint ckpt;
  nn::DenoiserModel<float> model;
  diffusion::VarianceSchedule schedule;
  FeatureMatrix primer;  // normalized
};

Generation prepare_generation(const GenerateOptions& o) {
  io::Checkpoint ckpt = io::load_checkpoint_file(o.checkpoint);
  const int k = ckpt.model.frames;
  if (o.buffer_k != 0 && o.buffer_k != k) {
    throw ValidationError("requested buffer K = " + std::to_string(o.buffer_k) + " does not match checkpoint K = " +
                          std::to_string(k));
  }
  if (ckpt.model.steps != k) {
    throw ValidationError("checkpoint K = " + std::to_string(k) + " differs from its diffusion steps T = " +
                          std::to_string(ckpt.model.steps));
  }
  motion::MotionClip primer = load_clip_for(o.primer, ckpt, o.scale);
  if (primer.length() < k) {
    throw ValidationError("primer has " + std::to_string(primer.length()) + " frames, buffer K = " +
                          std::to_string(k) + " needed");
  }
  FeatureMatrix first = primer.frames.topRows(k);
  first.row(0).head<2>().setZero();
  FeatureMatrix normalized = ckpt.normalization.normalize(first);
  nn::DenoiserModel<float> model = io::load_model(ckpt);
  auto schedule = diffusion::VarianceSchedule::build(ckpt.schedule, ckpt.model.steps);
  return Generation{std::move(ckpt), std::move(model), std::move(schedule), std::move(normalized)};
}

void write_generation(const GenerateOptions& o, const Generation& g, const FeatureMatrix& normalized,
                      std::ostream& out) {
  motion::MotionClip clip{g.ckpt.normalization.denormalize(normalized), g.ckpt.skeleton, g.ckpt.fps};
  data::write_bvh_file(clip, o.out, o.scale);
  if (!o.features_out.empty()) {
    auto os = open_out(o.features_out);
    write_features_csv(os, clip.frames);
  }
  out << "wrote " << clip.length() << " frames to " << o.out << '\n';
}

sample::SamplerConfig sampler_config(const GenerateOptions& o) {
  sample::SamplerConfig c;
  c.stochastic = !o.deterministic;
  c.literal = o.literal;
  c.gap = o.gap;
  return c;
}

// Lines of "path, start_frame"; blank lines and # comments skipped.
std::vector<std::pair<std::string, std::int64_t>> read_manifest(const std::string& path) {
  auto is = open_in(path);
  std::vector<std::pair<std::string, std::int64_t>> out;
  std::string line;
  int lineno = 0;
  const auto base = std::filesystem::path(path).parent_path();
  while (std::getline(is, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw ParseError("guide manifest: expected 'path, start_frame'", lineno);
    std::string file = line.substr(first, comma - first);
    file.erase(file.find_last_not_of(" \t") + 1);
    std::int64_t start = 0;
    try {
      start = std::stoll(line.substr(comma + 1));
    } catch (const std::logic_error&) {
      throw ParseError("guide manifest: bad start frame", lineno);
    }
    std::filesystem::path p(file);
    if (p.is_relative()) p = base / p;
    out.emplace_back(p.string(), start);
  }
  return out;
}

int run_ingest(const data::DatasetConfig& cfg, const std::string& source_dir, bool toy, std::uint64_t seed,
               int clips, int clip_len, const std::string& out_path, std::ostream& out) {
  data::Dataset ds;
  if (toy) {
    const auto toys = data::generate_toy_dataset(seed, clips, clip_len);
    std::vector<motion::MotionClip> cs;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < toys.size(); ++i) {
      cs.push_back(toys[i].clip);
      names.push_back("toy" + std::to_string(i));
    }
    ds = data::build_dataset(cs, names, cfg.window_len, cfg.stride);
  } else {
    if (source_dir.empty()) throw ValidationError("ingest needs --source-dir or --toy");
    ds = data::ingest_bvh_directory(source_dir, cfg);
  }
  data::save_dataset_file(ds, out_path);
  out << "wrote " << ds.windows.size() << " windows of " << ds.window_len << " frames (" << ds.feature_width()
      << " features) to " << out_path << '\n';
  return 0;
}

// Options from a key = value file. Anything given on the command line wins.
// (CLI11 only reads config files attached to the top-level app.)
void apply_config_file(CLI::App* app, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open config file " + path);
  for (const auto& item : CLI::ConfigINI().from_config(is)) {
    if (item.name == "++" || item.name == "--") continue;
    CLI::Option* opt = app->get_option_no_throw("--" + item.name);
    if (!opt || opt->get_name() == "--config") {
      throw CLI::ConfigError::Extras(item.fullname());
    }
    if (opt->count() > 0) continue;
    for (const auto& v : item.inputs) opt->add_result(v);
    opt->run_callback();
  }
}

}  // namespace

motion::FeatureMatrix read_features_csv(std::istream& is) { return to_matrix(read_numeric_csv(is, "features csv")); }

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporally entangled diffusion for long motion sequences", "tedi"};
  app.require_subcommand(1);

  // ingest
  data::DatasetConfig ingest_cfg;
  std::string source_dir, ingest_out;
  bool toy = false;
  std::uint64_t toy_seed = 0;
  int toy_clips = 64, toy_len = 256;
  auto* ingest = app.add_subcommand("ingest", "Build a windowed dataset cache from BVH files or the toy gait");
  ingest->add_option("--source-dir", source_dir, "Directory of .bvh files")->check(CLI::ExistingDirectory);
  ingest->add_option("--source-fps", ingest_cfg.source_fps, "Frame rate of the input files");
  ingest->add_option("--target-fps", ingest_cfg.target_fps, "Frame rate after decimation");
  ingest->add_option("--window", ingest_cfg.window_len, "Window length in frames");
  ingest->add_option("--stride", ingest_cfg.stride, "Window stride in frames");
  ingest->add_option("--scale", ingest_cfg.scale, "BVH units to meters");
  ingest->add_flag("--toy", toy, "Use the synthetic gait generator instead of BVH files");
  ingest->add_option("--seed", toy_seed, "Toy generator seed");
  ingest->add_option("--clips", toy_clips, "Toy clip count");
  ingest->add_option("--clip-len", toy_len, "Toy clip length in frames");
  ingest->add_option("--out", ingest_out, "Dataset cache to write")->required();

  // train
  nn::DenoiserConfig model_cfg;
  train::TrainConfig train_cfg;
  std::string data_path, ckpt_out, resume, log_path, train_config, schedule_name = "linear";
  int steps_override = -1;
  auto* trainc = app.add_subcommand("train", "Train the denoiser");
  trainc->add_option("--config", train_config, "Key = value file with any of these options")->check(CLI::ExistingFile);
  trainc->add_option("--data", data_path, "Dataset cache")->required()->check(CLI::ExistingFile);
  trainc->add_option("--out", ckpt_out, "Checkpoint to write")->required();
  trainc->add_option("--resume", resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
  trainc->add_option("--log", log_path, "Training log CSV");
  trainc->add_option("--frames", model_cfg.frames, "Buffer length K (also the number of diffusion steps)");
  trainc->add_option("--channels", model_cfg.channels, "Channel width per resolution level")->delimiter(',');
  trainc->add_option("--embed-dim", model_cfg.embed_dim, "Level embedding width");
  trainc->add_option("--kernel", model_cfg.kernel, "Convolution kernel size");
  trainc->add_option("--groups", model_cfg.groups, "Group-norm groups");
  bool no_attention = false;
  trainc->add_flag("--no-attention", no_attention, "Drop the bottleneck attention block");
  trainc->add_option("--schedule", schedule_name, "Variance schedule: linear or cosine");
  trainc->add_option("--p-random", train_cfg.p_random, "Probability of the random level schedule");
  trainc->add_option("--lambda-diff", train_cfg.lambda_diff, "Weight of the feature loss");
  trainc->add_option("--lambda-pos", train_cfg.lambda_pos, "Weight of the joint position loss");
  trainc->add_option("--lambda-contact", train_cfg.lambda_contact, "Weight of the foot contact loss");
  trainc->add_option("--lr", train_cfg.learning_rate, "Adam learning rate");
  trainc->add_option("--batch", train_cfg.batch_size, "Batch size");
  trainc->add_option("--steps", steps_override, "Total optimization steps");
  trainc->add_option("--checkpoint-every", train_cfg.checkpoint_every, "Checkpoint cadence in steps (0 = end only)");
  trainc->add_option("--seed", train_cfg.seed, "Random seed");
  trainc->add_flag("--gt-contacts", train_cfg.ground_truth_contacts, "Contact loss with dataset labels");

  // generate / guide / trajectory
  GenerateOptions gen_opts, guide_opts, traj_opts;
  auto* generate = app.add_subcommand("generate", "Generate a long motion from a primer");
  add_generate_options(generate, gen_opts, true);
  std::string manifest;
  auto* guide = app.add_subcommand("guide", "Generate through motion guides placed at future frames");
  add_generate_options(guide, guide_opts, true);
  guide->add_option("--guides", manifest, "Manifest of 'path, start_frame' lines")->required()->check(CLI::ExistingFile);
  std::string traj_path;
  auto* trajectory = app.add_subcommand("trajectory", "Generate along a root trajectory");
  add_generate_options(trajectory, traj_opts, false);
  trajectory->add_option("--traj", traj_path, "CSV of N rows: dx, dz, height")->required()->check(CLI::ExistingFile);

  // eval
  std::string eval_input, eval_ckpt, eval_csv, eval_summary;
  int window = 32, stride = 0;
  double eval_scale = 1.0;
  auto* evalc = app.add_subcommand("eval", "Windowed pose variance and foot slide of a clip");
  evalc->add_option("--input", eval_input, "Clip as .bvh or features .csv")->required()->check(CLI::ExistingFile);
  evalc->add_option("--checkpoint", eval_ckpt, "Skeleton source for .csv input")->check(CLI::ExistingFile);
  evalc->add_option("--window", window, "Variance window in frames");
  evalc->add_option("--stride", stride, "Window stride (default window/2)");
  evalc->add_option("--csv", eval_csv, "Write window_start,variance here");
  evalc->add_option("--summary", eval_summary, "Write the key = value summary here");
  evalc->add_option("--scale", eval_scale, "BVH units to meters");

  // export-bvh
  std::string export_data, export_out;
  int export_index = 0, export_frames = 256;
  std::int64_t export_toy_seed = -1;
  double export_scale = 1.0;
  auto* exportc = app.add_subcommand("export-bvh", "Write a dataset window or a toy gait clip as BVH");
  exportc->add_option("--data", export_data, "Dataset cache")->check(CLI::ExistingFile);
  exportc->add_option("--index", export_index, "Window index in the cache");
  exportc->add_option("--toy-seed", export_toy_seed, "Synthesize a toy gait clip with this seed instead");
  exportc->add_option("--frames", export_frames, "Toy clip length");
  exportc->add_option("--out", export_out, "Output BVH")->required();
  exportc->add_option("--scale", export_scale, "Meters to BVH units divisor");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
    if (!train_config.empty()) apply_config_file(trainc, train_config);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*ingest) {
      ingest_cfg.validate();
      return run_ingest(ingest_cfg, source_dir, toy, toy_seed, toy_clips, toy_len, ingest_out, out);
    }

    if (*trainc) {
      const data::Dataset ds = data::load_dataset_file(data_path);
      std::unique_ptr<train::Trainer> trainer;
      if (!resume.empty()) {
        io::Checkpoint ck = io::load_checkpoint_file(resume);
        if (!ck.state) throw ValidationError(resume + " holds no training state");
        train::TrainConfig cfg = ck.training;
        if (steps_override >= 0) cfg.total_steps = steps_override;
        trainer = std::make_unique<train::Trainer>(ds, io::load_model(ck), cfg, *ck.state);
      } else {
        model_cfg.features = ds.feature_width();
        model_cfg.steps = model_cfg.frames;
        model_cfg.attention = !no_attention;
        train_cfg.schedule = diffusion::parse_schedule_kind(schedule_name);
        if (steps_override >= 0) train_cfg.total_steps = steps_override;
        trainer = std::make_unique<train::Trainer>(ds, model_cfg, train_cfg);
      }
      std::ofstream log;
      if (!log_path.empty()) {
        log.open(log_path, resume.empty() ? std::ios::trunc : std::ios::app);
        if (!log) throw Error("cannot open " + log_path + " for writing");
      }
      auto save = [&](const train::Trainer& t) { io::save_checkpoint_file(io::make_checkpoint(t), ckpt_out); };
      trainer->run(log_path.empty() ? nullptr : &log, save);
      save(*trainer);
      const auto& hist = trainer->state().history;
      out << "trained to step " << trainer->state().step;
      if (!hist.empty()) out << ", last L_diff " << hist.back().loss.diff;
      out << "; checkpoint " << ckpt_out << '\n';
      return 0;
    }

    if (*generate) {
      Generation g = prepare_generation(gen_opts);
      if (gen_opts.frames < 0) throw ValidationError("--frames must be non-negative");
      sample::ModelDenoiser den(g.model);
      sample::Sampler sampler(den, g.schedule, sampler_config(gen_opts));
      Rng rng(gen_opts.seed);
      write_generation(gen_opts, g, sampler.generate(g.primer, gen_opts.frames, rng), out);
      return 0;
    }

    if (*guide) {
      Generation g = prepare_generation(guide_opts);
      std::vector<sample::MotionGuide> guides;
      for (const auto& [path, start] : read_manifest(manifest)) {
        motion::MotionClip clip = load_clip_for(path, g.ckpt, guide_opts.scale);
        guides.push_back({g.ckpt.normalization.normalize(clip.frames), start, {}});
      }
      sample::ModelDenoiser den(g.model);
      sample::Sampler sampler(den, g.schedule, sampler_config(guide_opts));
      Rng rng(guide_opts.seed);
      write_generation(guide_opts, g, sampler.generate_guided(g.primer, guides, guide_opts.frames, rng), out);
      return 0;
    }

    if (*trajectory) {
      Generation g = prepare_generation(traj_opts);
      auto is = open_in(traj_path);
      FeatureMatrix raw = to_matrix(read_numeric_csv(is, "trajectory csv"));
      if (raw.rows() < 1 || raw.cols() != motion::kRootChannels) {
        throw ValidationError("trajectory csv must hold N >= 1 rows of 3 values");
      }
      sample::TrajectorySpec spec;
      spec.root = raw;
      for (int c = 0; c < motion::kRootChannels; ++c) {
        spec.root.col(c) = (raw.col(c).array() - g.ckpt.normalization.mean(c)) / g.ckpt.normalization.std(c);
      }
      sample::ModelDenoiser den(g.model);
      sample::Sampler sampler(den, g.schedule, sampler_config(traj_opts));
      Rng rng(traj_opts.seed);
      write_generation(traj_opts, g, sampler.generate_trajectory(g.primer, spec, rng, traj_opts.frames), out);
      return 0;
    }

    if (*evalc) {
      motion::MotionClip clip;
      if (std::filesystem::path(eval_input).extension() == ".csv") {
        if (eval_ckpt.empty()) throw ValidationError("eval of a .csv clip needs --checkpoint for the skeleton");
        const io::Checkpoint ck = io::load_checkpoint_file(eval_ckpt);
        auto is = open_in(eval_input);
        clip = motion::MotionClip{read_features_csv(is), ck.skeleton, ck.fps};
      } else {
        data::BvhOptions opts;
        opts.scale = eval_scale;
        clip = data::bvh_to_clip(data::read_bvh_file(eval_input, opts));
      }
      clip.validate();
      const eval::MetricReport report = eval::evaluate_clip(clip, window, stride);
      if (eval_csv.empty()) {
        eval::write_variance_csv(out, report.windowed_variance);
      } else {
        auto os = open_out(eval_csv);
        eval::write_variance_csv(os, report.windowed_variance);
      }
      if (eval_summary.empty()) {
        eval::write_summary(out, report);
      } else {
        auto os = open_out(eval_summary);
        eval::write_summary(os, report);
      }
      return 0;
    }

    if (*exportc) {
      motion::MotionClip clip;
      if (export_toy_seed >= 0) {
        clip = data::generate_toy_dataset(static_cast<std::uint64_t>(export_toy_seed), 1, export_frames)[0].clip;
      } else {
        if (export_data.empty()) throw ValidationError("export-bvh needs --data or --toy-seed");
        const data::Dataset ds = data::load_dataset_file(export_data);
        if (export_index < 0 || export_index >= static_cast<int>(ds.windows.size())) {
          throw ValidationError("window index " + std::to_string(export_index) + " out of range (" +
                                std::to_string(ds.windows.size()) + " windows)");
        }
        clip = ds.window_clip(static_cast<std::size_t>(export_index));
      }
      data::write_bvh_file(clip, export_out, export_scale);
      out << "wrote " << clip.length() << " frames to " << export_out << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace tedi::cli
