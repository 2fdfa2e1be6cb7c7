#include "scralign/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "scralign/baselines.hpp"
#include "scralign/checkpoint.hpp"
#include "scralign/config.hpp"
#include "scralign/data.hpp"
#include "scralign/engine.hpp"
#include "scralign/errors.hpp"
#include "scralign/io.hpp"
#include "scralign/repro.hpp"

namespace scr {

namespace {

unsigned default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

std::vector<std::string> split_csv_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

template <class T>
void set_if(const std::optional<T>& flag, T& field) {
  if (flag) field = *flag;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

// Flags shared by every command that runs test-time optimization.
struct InferFlags {
  std::optional<int> steps, window, restarts, steps_per_sigma_epoch, sigma_epochs;
  std::optional<double> lr, tol, sigma_start, sigma_end;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> loss;

  void add(CLI::App& app) {
    app.add_option("--steps", steps, "max test-time optimization steps");
    app.add_option("--infer-lr", lr, "test-time learning rate");
    app.add_option("--tol", tol, "stop when the loss improves by less than this over --window steps");
    app.add_option("--window", window, "stopping window in steps");
    app.add_option("--restarts", restarts, "fresh latents tried per pair; lowest final loss wins");
    app.add_option("--infer-seed", seed, "seed for the fresh latents");
    app.add_option("--infer-loss", loss, "chamfer | adaptive-chamfer");
    app.add_option("--sigma-start", sigma_start, "adaptive threshold at schedule start");
    app.add_option("--sigma-end", sigma_end, "adaptive threshold at schedule end");
    app.add_option("--sigma-epochs", sigma_epochs, "schedule length in epochs");
    app.add_option("--steps-per-sigma-epoch", steps_per_sigma_epoch, "optimizer steps per schedule epoch");
  }
  void apply_to(InferConfig& c) const {
    set_if(steps, c.max_steps);
    set_if(lr, c.lr);
    set_if(tol, c.convergence_tol);
    set_if(window, c.window);
    set_if(restarts, c.restarts);
    set_if(seed, c.seed);
    if (loss) c.loss_kind = parse_loss_kind(*loss);
    set_if(sigma_start, c.sigma_schedule.sigma_start);
    set_if(sigma_end, c.sigma_schedule.sigma_end);
    set_if(sigma_epochs, c.sigma_schedule.horizon_epochs);
    set_if(steps_per_sigma_epoch, c.steps_per_sigma_epoch);
    c.validate();
  }
};

struct DirectFlags {
  std::optional<int> steps;
  std::optional<double> lr;
  std::optional<std::string> loss;

  void add(CLI::App& app) {
    app.add_option("--direct-steps", steps, "direct optimization steps");
    app.add_option("--direct-lr", lr, "direct optimization learning rate");
    app.add_option("--direct-loss", loss, "chamfer | adaptive-chamfer");
  }
  void apply_to(DirectConfig& c) const {
    set_if(steps, c.steps);
    set_if(lr, c.lr);
    if (loss) c.loss_kind = parse_loss_kind(*loss);
  }
};

RunConfig base_config(const std::string& config_path) {
  return config_path.empty() ? RunConfig{} : load_run_config(config_path);
}

std::vector<EvalPair> eval_pairs(const Dataset& ds, const std::string& split, std::size_t limit = 0) {
  std::vector<EvalPair> out;
  for (const auto& p : ds.pairs) {
    if (!split.empty() && split != "all" && p.split != split) continue;
    out.push_back({p.spec.pair_id, p.spec.category, p.spec.source, p.spec.target, p.spec.ground_truth});
    if (limit && out.size() == limit) break;
  }
  if (out.empty()) throw InvalidArgument("no pairs in split '" + split + "'");
  return out;
}

std::vector<TrainingPair> training_pairs(const Dataset& ds, const std::string& split) {
  std::vector<TrainingPair> out;
  for (const auto& p : ds.pairs)
    if (split == "all" || p.split == split) out.push_back({p.spec.pair_id, p.spec.source, p.spec.target});
  if (out.empty()) throw InvalidArgument("no training pairs in split '" + split + "'");
  return out;
}

std::string fixed(double v, int digits) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

// ---- gen-data -----------------------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& out) {
  const auto pairs = generate_dataset(cfg.data);
  write_dataset(out_dir, cfg.data, pairs);
  std::size_t train = 0, points_min = SIZE_MAX, points_max = 0;
  for (const auto& p : pairs) {
    train += p.split == "train";
    points_min = std::min({points_min, p.spec.source.size(), p.spec.target.size()});
    points_max = std::max({points_max, p.spec.source.size(), p.spec.target.size()});
  }
  out << "wrote " << pairs.size() << " pairs (" << train << " train, " << pairs.size() - train << " test) to "
      << out_dir.string() << "\n"
      << "  shapes: ";
  for (std::size_t i = 0; i < cfg.data.shapes.size(); ++i) out << (i ? "," : "") << cfg.data.shapes[i];
  out << "\n  points per cloud: " << points_min << (points_min == points_max ? "" : "-" + std::to_string(points_max))
      << "\n  rotation: [0, " << format_double(cfg.data.angle_max_deg) << "] deg per axis, translation: ["
      << format_double(-cfg.data.trans_range) << ", " << format_double(cfg.data.trans_range) << "]"
      << "\n  partial: " << (cfg.data.partial ? "yes (keep " + format_double(cfg.data.keep_ratio) + ")" : "no")
      << ", split: " << cfg.data.split << ", seed: " << cfg.data.seed << "\n";
  return kExitOk;
}

// ---- train --------------------------------------------------------------------------

struct TrainArgs {
  std::filesystem::path data, checkpoint, csv, resume;
  std::string split = "train";
  int save_every = 0;
  int print_every = 10;
};

int cmd_train(RunConfig cfg, const TrainArgs& a, std::ostream& out) {
  const Dataset ds = read_dataset(a.data);
  const auto pairs = training_pairs(ds, a.split);
  cfg.train.validate();
  cfg.decoder.validate();

  TrainState state;
  if (!a.resume.empty()) {
    const Checkpoint ckpt = load_checkpoint(a.resume);
    if (ckpt.loss_kind != cfg.train.loss_kind || ckpt.seed != cfg.train.seed) {
      out << "note: resuming with the loss kind and seed stored in the checkpoint\n";
    }
    cfg.train.loss_kind = ckpt.loss_kind;
    cfg.train.seed = ckpt.seed;
    cfg.train.batch_size = ckpt.batch_size;
    cfg.train.lr = ckpt.lr;
    cfg.train.lr_decay_per_epoch = ckpt.lr_decay_per_epoch;
    state = restore_train_state(ckpt, pairs);
    out << "resuming at epoch " << state.epochs_completed << " of " << cfg.train.epochs << "\n";
  } else {
    state = initial_train_state(pairs, cfg.decoder, cfg.train);
  }

  const bool adaptive = cfg.train.loss_kind == LossKind::AdaptiveChamfer;
  std::ofstream csv;
  if (!a.csv.empty()) {
    const bool append = !a.resume.empty() && std::filesystem::exists(a.csv);
    if (append) {
      csv.open(a.csv, std::ios::binary | std::ios::app);
      if (!csv) throw IoError("cannot write '" + a.csv.string() + "'");
    } else {
      csv = open_out(a.csv);
      csv << "epoch,mean_loss,lr" << (adaptive ? ",sigma" : "") << "\n";
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  auto on_epoch = [&](const EpochLog& log, const TrainState& s) {
    if (csv.is_open()) {
      csv << log.epoch << "," << format_double(log.mean_loss) << "," << format_double(log.lr);
      if (adaptive) csv << "," << format_double(log.sigma);
      csv << "\n" << std::flush;
    }
    if (a.print_every > 0 && (log.epoch % a.print_every == 0 || log.epoch + 1 == cfg.train.epochs)) {
      out << "epoch " << log.epoch << "  loss " << fixed(log.mean_loss, 6) << "  lr " << format_double(log.lr);
      if (adaptive) out << "  sigma " << format_double(log.sigma);
      out << "\n" << std::flush;
    }
    if (a.save_every > 0 && (log.epoch + 1) % a.save_every == 0) save_checkpoint(a.checkpoint, make_checkpoint(s, pairs, cfg.train));
  };
  TrainResult result = train(pairs, cfg.train, std::move(state), on_epoch);
  save_checkpoint(a.checkpoint, make_checkpoint(result.state, pairs, cfg.train));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out << "trained " << pairs.size() << " pairs to epoch " << result.state.epochs_completed << " in " << fixed(secs, 1)
      << " s; checkpoint " << a.checkpoint.string() << "\n";
  return kExitOk;
}

// ---- register -----------------------------------------------------------------------

int cmd_register(const RunConfig& cfg, const std::filesystem::path& ckpt_path, const std::filesystem::path& src,
                 const std::filesystem::path& dst, const std::filesystem::path& aligned, bool as_json, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const PointCloud source = read_point_file(src);
  const PointCloud target = read_point_file(dst);
  const InferResult r = infer_pair(source, target, ckpt.params, cfg.infer);
  const Vec3 deg = r.transform.rotation.degrees();
  const Vec3& t = r.transform.translation;
  if (as_json) {
    out << "{\"angles_deg\": [" << format_double(deg.x()) << ", " << format_double(deg.y()) << ", " << format_double(deg.z())
        << "], \"translation\": [" << format_double(t.x()) << ", " << format_double(t.y()) << ", " << format_double(t.z())
        << "], \"final_loss\": " << format_double(r.final_loss) << ", \"steps\": " << r.steps
        << ", \"restart\": " << r.restart << ", \"wall_time_s\": " << format_double(r.wall_time) << "}\n";
  } else {
    out << "angles_deg   " << fixed(deg.x(), 6) << " " << fixed(deg.y(), 6) << " " << fixed(deg.z(), 6) << "\n"
        << "translation  " << fixed(t.x(), 6) << " " << fixed(t.y(), 6) << " " << fixed(t.z(), 6) << "\n"
        << "final_loss   " << format_double(r.final_loss) << "\n"
        << "steps        " << r.steps << "\n"
        << "wall_time_s  " << fixed(r.wall_time, 3) << "\n";
  }
  if (!aligned.empty()) write_xyz(aligned, apply_transform(r.transform, source));
  return kExitOk;
}

// ---- eval ---------------------------------------------------------------------------

struct EvalArgs {
  std::filesystem::path data, checkpoint, csv, summary;
  std::string method = "scr";
  std::string split = "test";
  std::string exclude;
  unsigned threads = default_threads();
  std::size_t limit = 0;
};

Registrar make_registrar(const std::string& method, const RunConfig& cfg, const DecoderParams* params) {
  if (method == "icp") {
    return [cfg](const EvalPair& p) {
      const auto r = icp_register(p.source, p.target, cfg.icp);
      return MethodOutput{r.transform, r.mse_log.empty() ? 0.0 : r.mse_log.back()};
    };
  }
  if (method == "direct") {
    return [cfg](const EvalPair& p) {
      const auto r = direct_optimize(p.source, p.target, cfg.direct);
      return MethodOutput{r.transform, r.final_loss};
    };
  }
  if (method == "scr") {
    if (!params) throw InvalidArgument("method scr needs --checkpoint");
    return [cfg, params](const EvalPair& p) {
      const auto r = infer_pair(p.source, p.target, *params, cfg.infer);
      return MethodOutput{r.transform, r.final_loss};
    };
  }
  throw InvalidArgument("unknown method '" + method + "' (expected scr, icp or direct)");
}

void print_table_header(std::ostream& out) {
  out << std::left << std::setw(8) << "method" << std::right << std::setw(7) << "pairs";
  for (const char* h : {"MSE(R)", "RMSE(R)", "MAE(R)", "MSE(t)", "RMSE(t)", "MAE(t)"}) out << std::setw(14) << h;
  out << "\n";
}

void print_table_row(std::ostream& out, const std::string& method, const AggregateMetrics& agg) {
  const auto& e = agg.errors;
  out << std::left << std::setw(8) << method << std::right << std::setw(7) << agg.translation_pairs;
  for (double v : {e.mse_r, e.rmse_r, e.mae_r, e.mse_t, e.rmse_t, e.mae_t}) out << std::setw(14) << fixed(v, 6);
  out << "\n";
}

int cmd_eval(const RunConfig& cfg, const EvalArgs& a, std::ostream& out) {
  if (a.method != "scr" && !a.checkpoint.empty()) {
    throw InvalidArgument("--checkpoint applies to method scr only, not '" + a.method + "'");
  }
  const Dataset ds = read_dataset(a.data);
  const auto pairs = eval_pairs(ds, a.split, a.limit);
  std::optional<Checkpoint> ckpt;
  if (!a.checkpoint.empty()) ckpt = load_checkpoint(a.checkpoint);
  const auto excl_list = split_csv_list(a.exclude);
  const std::set<std::string> exclude(excl_list.begin(), excl_list.end());
  const auto result = evaluate(pairs, make_registrar(a.method, cfg, ckpt ? &ckpt->params : nullptr), exclude, a.threads);

  if (!a.csv.empty()) {
    auto csv = open_out(a.csv);
    csv << "pair_id,category,method,alpha_deg,beta_deg,gamma_deg,tx,ty,tz,gt_alpha_deg,gt_beta_deg,gt_gamma_deg,gt_tx,gt_ty,"
           "gt_tz,mse_r,rmse_r,mae_r,mse_t,rmse_t,mae_t,final_loss,wall_time_s\n";
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& r = result.reports[i];
      const Vec3 pd = r.predicted.rotation.degrees(), gd = r.ground_truth.rotation.degrees();
      const Vec3 &pt = r.predicted.translation, &gt = r.ground_truth.translation;
      csv << pairs[i].pair_id << "," << pairs[i].category << "," << a.method;
      for (double v : {pd.x(), pd.y(), pd.z(), pt.x(), pt.y(), pt.z(), gd.x(), gd.y(), gd.z(), gt.x(), gt.y(), gt.z(),
                       r.errors.mse_r, r.errors.rmse_r, r.errors.mae_r, r.errors.mse_t, r.errors.rmse_t, r.errors.mae_t,
                       r.final_alignment_loss, r.wall_time})
        csv << "," << format_double(v);
      csv << "\n";
    }
  }
  const auto& e = result.aggregate.errors;
  if (!a.summary.empty()) {
    auto csv = open_out(a.summary);
    csv << "method,rotation_pairs,translation_pairs,mse_r,rmse_r,mae_r,mse_t,rmse_t,mae_t\n"
        << a.method << "," << result.aggregate.rotation_pairs << "," << result.aggregate.translation_pairs;
    for (double v : {e.mse_r, e.rmse_r, e.mae_r, e.mse_t, e.rmse_t, e.mae_t}) csv << "," << format_double(v);
    csv << "\n";
  }
  print_table_header(out);
  print_table_row(out, a.method, result.aggregate);
  if (!exclude.empty()) {
    out << "rotation metrics over " << result.aggregate.rotation_pairs << " pairs (excluded: " << a.exclude << ")\n";
  }
  return kExitOk;
}

// ---- bench --------------------------------------------------------------------------

int cmd_bench(const RunConfig& cfg, const std::filesystem::path& data, const std::filesystem::path& ckpt_path,
              const std::string& methods, std::size_t count, unsigned threads, const std::filesystem::path& csv_path,
              std::ostream& out) {
  const Dataset ds = read_dataset(data);
  std::vector<EvalPair> pairs = eval_pairs(ds, "test");
  if (count > pairs.size()) {
    throw InvalidArgument("--pairs " + std::to_string(count) + " exceeds the " + std::to_string(pairs.size()) + " test pairs");
  }
  pairs.resize(count);
  std::optional<Checkpoint> ckpt;
  if (!ckpt_path.empty()) ckpt = load_checkpoint(ckpt_path);
  std::vector<std::pair<std::string, double>> rows;
  for (const auto& m : split_csv_list(methods)) {
    const auto reg = make_registrar(m, cfg, ckpt ? &ckpt->params : nullptr);
    const auto t0 = std::chrono::steady_clock::now();
    parallel_for(pairs.size(), threads, [&](std::size_t i) { reg(pairs[i]); });
    rows.emplace_back(m, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  out << std::left << std::setw(8) << "method" << std::right << std::setw(8) << "pairs" << std::setw(14) << "total_s"
      << std::setw(14) << "s_per_pair" << "\n";
  for (const auto& [m, secs] : rows) {
    out << std::left << std::setw(8) << m << std::right << std::setw(8) << count << std::setw(14) << fixed(secs, 4)
        << std::setw(14) << fixed(secs / static_cast<double>(count), 6) << "\n";
  }
  out << "threads: " << threads << "\n";
  if (!csv_path.empty()) {
    auto csv = open_out(csv_path);
    csv << "method,pairs,threads,total_s,s_per_pair\n";
    for (const auto& [m, secs] : rows)
      csv << m << "," << count << "," << threads << "," << format_double(secs) << ","
          << format_double(secs / static_cast<double>(count)) << "\n";
  }
  return kExitOk;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"scralign: rigid point cloud registration with per-pair latent codes", "scralign"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "scralign 0.1.0");

  std::string config_path;
  unsigned threads = default_threads();
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  };

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic pair dataset");
  add_common(gen);
  std::filesystem::path gen_out = default_data_dir();
  std::optional<std::string> shapes, split, test_shapes;
  std::optional<std::size_t> n_pairs, n_points;
  std::optional<std::uint64_t> data_seed;
  std::optional<double> angle_max, trans_range, keep_ratio, train_fraction;
  bool partial = false, resample = false;
  gen->add_option("--out", gen_out, "output directory (default $SCRALIGN_DATA_DIR or ./data)");
  gen->add_option("--shapes", shapes, "comma-separated shape kinds");
  gen->add_option("--pairs", n_pairs, "number of pairs");
  gen->add_option("--points", n_points, "points per cloud");
  gen->add_option("--seed", data_seed, "generation seed");
  gen->add_option("--angle-max", angle_max, "max rotation per Euler angle, degrees");
  gen->add_option("--trans-range", trans_range, "translation components in [-r, r]");
  gen->add_flag("--partial", partial, "crop source and target independently");
  gen->add_option("--keep-ratio", keep_ratio, "fraction of points kept by --partial");
  gen->add_flag("--resample", resample, "sample the target independently of the source");
  gen->add_option("--split", split, "random | category");
  gen->add_option("--train-fraction", train_fraction, "train share of pairs (random) or categories (category)");
  gen->add_option("--test-shapes", test_shapes, "categories held out for test (category split)");

  // train
  auto* tr = app.add_subcommand("train", "jointly train the decoder and per-pair latents");
  add_common(tr);
  TrainArgs ta;
  ta.data = default_data_dir();
  std::optional<int> epochs, sigma_epochs;
  std::optional<std::size_t> batch;
  std::optional<double> lr, decay, sigma_start, sigma_end;
  std::optional<std::string> loss;
  std::optional<std::uint64_t> train_seed;
  bool batch_norm = false;
  tr->add_option("--data", ta.data, "dataset directory");
  tr->add_option("--split", ta.split, "split to train on (train | test | all)");
  tr->add_option("--out,--checkpoint", ta.checkpoint, "checkpoint to write")->required();
  tr->add_option("--csv", ta.csv, "per-epoch loss curve");
  tr->add_option("--resume", ta.resume, "continue from this checkpoint")->check(CLI::ExistingFile);
  tr->add_option("--save-every", ta.save_every, "also checkpoint every N epochs");
  tr->add_option("--print-every", ta.print_every, "console progress interval (0 = quiet)");
  tr->add_option("--epochs", epochs, "total epochs");
  tr->add_option("--batch-size", batch, "pairs per decoder update");
  tr->add_option("--lr", lr, "initial learning rate");
  tr->add_option("--lr-decay", decay, "per-epoch learning rate factor");
  tr->add_option("--loss", loss, "chamfer | adaptive-chamfer");
  tr->add_option("--sigma-start", sigma_start, "adaptive threshold at epoch 0");
  tr->add_option("--sigma-end", sigma_end, "adaptive threshold at the horizon");
  tr->add_option("--sigma-epochs", sigma_epochs, "schedule horizon in epochs");
  tr->add_option("--seed", train_seed, "initialization and shuffling seed");
  tr->add_flag("--batch-norm", batch_norm, "batch norm in the point MLP");
  tr->add_option("--threads", threads, "worker threads");

  // register
  auto* reg = app.add_subcommand("register", "align one source file to one target file");
  add_common(reg);
  std::filesystem::path reg_ckpt, reg_src, reg_dst, reg_aligned;
  bool reg_json = false;
  InferFlags reg_flags;
  reg->add_option("--checkpoint", reg_ckpt, "trained checkpoint")->required();
  reg->add_option("source", reg_src, "source point file (.xyz or .off)")->required();
  reg->add_option("target", reg_dst, "target point file (.xyz or .off)")->required();
  reg->add_option("--emit-aligned", reg_aligned, "write the transformed source as XYZ");
  reg->add_flag("--json", reg_json, "print the report as JSON");
  reg_flags.add(*reg);

  // eval
  auto* ev = app.add_subcommand("eval", "score a method on a dataset split");
  add_common(ev);
  EvalArgs ea;
  ea.data = default_data_dir();
  InferFlags ev_flags;
  DirectFlags ev_direct;
  ev->add_option("--data", ea.data, "dataset directory");
  ev->add_option("--split", ea.split, "train | test | all");
  ev->add_option("--method", ea.method, "scr | icp | direct");
  ev->add_option("--checkpoint", ea.checkpoint, "trained checkpoint (method scr)");
  ev->add_option("--csv", ea.csv, "per-pair results");
  ev->add_option("--summary-csv", ea.summary, "aggregate row");
  ev->add_option("--exclude-symmetric", ea.exclude, "categories left out of rotation metrics");
  ev->add_option("--limit", ea.limit, "evaluate only the first N pairs");
  ev->add_option("--threads", ea.threads, "worker threads");
  ev_flags.add(*ev);
  ev_direct.add(*ev);

  // bench
  auto* bench = app.add_subcommand("bench", "time each method on the first test pairs");
  add_common(bench);
  std::filesystem::path bench_data = default_data_dir(), bench_ckpt, bench_csv;
  std::string bench_methods = "icp,direct,scr";
  std::size_t bench_pairs = 20;
  unsigned bench_threads = 1;
  InferFlags bench_flags;
  DirectFlags bench_direct;
  bench->add_option("--data", bench_data, "dataset directory");
  bench->add_option("--checkpoint", bench_ckpt, "trained checkpoint (needed for scr)");
  bench->add_option("--methods", bench_methods, "comma-separated methods");
  bench->add_option("--pairs", bench_pairs, "number of test pairs");
  bench->add_option("--threads", bench_threads, "worker threads (1 = serial timing)");
  bench->add_option("--csv", bench_csv, "timing table as CSV");
  bench_flags.add(*bench);
  bench_direct.add(*bench);

  // repro
  auto* repro = app.add_subcommand("repro", "run a reproduction script and check its thresholds");
  std::string script;
  std::filesystem::path work_dir = "repro_work";
  bool list = false;
  repro->add_option("script", script, "script name");
  repro->add_option("--work-dir", work_dir, "directory for generated data, checkpoints and results");
  repro->add_option("--threads", threads, "worker threads");
  repro->add_flag("--list", list, "list the available scripts");

  // config dump
  auto* show = app.add_subcommand("show-config", "print the effective configuration as JSON");
  add_common(show);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    if (const auto subs = app.get_subcommands(); !subs.empty()) err << "run '" << subs.front()->get_name() << " --help' for usage\n";
    return kExitUsage;
  }

  RunConfig cfg = base_config(config_path);

  if (*gen) {
    if (shapes) cfg.data.shapes = split_csv_list(*shapes);
    set_if(n_pairs, cfg.data.pairs);
    set_if(n_points, cfg.data.points);
    set_if(data_seed, cfg.data.seed);
    set_if(angle_max, cfg.data.angle_max_deg);
    set_if(trans_range, cfg.data.trans_range);
    if (partial) cfg.data.partial = true;
    set_if(keep_ratio, cfg.data.keep_ratio);
    if (resample) cfg.data.resample = true;
    set_if(split, cfg.data.split);
    set_if(train_fraction, cfg.data.train_fraction);
    if (test_shapes) cfg.data.test_shapes = split_csv_list(*test_shapes);
    return cmd_gen_data(cfg, gen_out, out);
  }
  if (*tr) {
    set_if(epochs, cfg.train.epochs);
    set_if(batch, cfg.train.batch_size);
    set_if(lr, cfg.train.lr);
    set_if(decay, cfg.train.lr_decay_per_epoch);
    if (loss) cfg.train.loss_kind = parse_loss_kind(*loss);
    set_if(sigma_start, cfg.train.sigma_schedule.sigma_start);
    set_if(sigma_end, cfg.train.sigma_schedule.sigma_end);
    set_if(sigma_epochs, cfg.train.sigma_schedule.horizon_epochs);
    set_if(train_seed, cfg.train.seed);
    if (batch_norm) cfg.decoder.use_batch_norm = true;
    cfg.train.threads = threads;
    return cmd_train(cfg, ta, out);
  }
  if (*reg) {
    reg_flags.apply_to(cfg.infer);
    return cmd_register(cfg, reg_ckpt, reg_src, reg_dst, reg_aligned, reg_json, out);
  }
  if (*ev) {
    ev_flags.apply_to(cfg.infer);
    ev_direct.apply_to(cfg.direct);
    return cmd_eval(cfg, ea, out);
  }
  if (*bench) {
    bench_flags.apply_to(cfg.infer);
    bench_direct.apply_to(cfg.direct);
    return cmd_bench(cfg, bench_data, bench_ckpt, bench_methods, bench_pairs, bench_threads, bench_csv, out);
  }
  if (*show) {
    out << dump_run_config(cfg);
    return kExitOk;
  }
  if (*repro) {
    if (list || script.empty()) {
      for (const auto& n : experiment_names()) out << n << "\n";
      return list ? kExitOk : kExitUsage;
    }
    ReproOptions opts;
    opts.work_dir = work_dir;
    opts.threads = threads;
    opts.log = &out;
    const auto report = run_experiment(script, opts);
    out << format_report(report);
    return report.passed() ? kExitOk : kExitFailure;
  }
  return kExitUsage;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return run(args, out, err);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace scr
