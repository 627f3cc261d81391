#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "ceemkit/dataset.hpp"
#include "ceemkit/gradcheck.hpp"
#include "ceemkit/graph.hpp"
#include "ceemkit/metrics.hpp"
#include "ceemkit/train.hpp"

namespace fs = std::filesystem;
using namespace ceemkit;

namespace {

// exit 2, for semantic misuse CLI11 cannot catch itself
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelArgs {
  std::string preset = "vgg_lite_ceem";
  std::string scale = "full";
  std::string config;
};

void add_model_flags(CLI::App *cmd, ModelArgs &args) {
  cmd->add_option("--preset", args.preset, "Model preset")
      ->check(CLI::IsMember({"vgg_lite", "vgg_lite_ceem"}));
  cmd->add_option("--scale", args.scale, "Preset scale")
      ->check(CLI::IsMember({"full", "tiny"}));
  cmd->add_option("--config", args.config,
                  "Model config JSON (overrides --preset)");
}

ModelGraph build_model(const ModelArgs &args) {
  if (!args.config.empty())
    return load_config(args.config);
  return preset_by_name(args.preset,
                        args.scale == "full" ? Scale::full : Scale::tiny);
}

void write_text(const std::string &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw IoError("cannot write " + path);
  out << text;
}

// Inputs are fed to the network rescaled to [0,1].
void normalize_images(Tensor &images) {
  for (std::size_t i = 0; i < images.size(); ++i)
    images[i] /= 255.0;
}

void print_summary(const ModelGraph &g, std::size_t input_size) {
  auto rows = g.summary(input_size, input_size);
  std::printf("%-14s %-14s %-16s %12s %12s\n", "layer", "kind", "output",
              "params(paper)", "params(true)");
  std::size_t total_paper = 0, total_true = 0;
  for (const auto &r : rows) {
    std::string shape;
    for (std::size_t i = 0; i < r.out_shape.size(); ++i)
      shape += (i ? "x" : "") + std::to_string(r.out_shape[i]);
    std::printf("%-14s %-14s %-16s %12zu %12zu\n", r.id.c_str(),
                r.kind.c_str(), shape.c_str(), r.params_paper, r.params_true);
    total_paper += r.params_paper;
    total_true += r.params_true;
  }
  std::printf("%-14s %-14s %-16s %12zu %12zu\n", "total", "", "", total_paper,
              total_true);
  std::printf("trainable parameters: %zu (%.2fM)\n", g.total_params(),
              static_cast<double>(g.total_params()) / 1e6);
}

void write_eval_outputs(const std::string &out_dir,
                        const std::vector<std::size_t> &truth,
                        const EvalResult &res,
                        const std::vector<std::string> &class_names) {
  fs::create_directories(out_dir);
  ConfusionMatrix cm =
      confusion(truth, res.predictions, class_names.size(), class_names);
  ClassReport rep = report(cm);
  write_text((fs::path(out_dir) / "report.json").string(), rep.to_json());
  write_text((fs::path(out_dir) / "confusion.csv").string(), cm.to_csv());

  auto curves = roc_auc(truth, res.scores);
  std::string roc = "class,threshold,fpr,tpr\n";
  for (const auto &c : curves)
    if (c.defined)
      roc += c.to_csv_rows(class_names[c.cls]);
  write_text((fs::path(out_dir) / "roc.csv").string(), roc);

  std::printf("accuracy %.4f  weighted P %.4f R %.4f F1 %.4f  AUC %.4f\n",
              rep.accuracy, rep.weighted_precision, rep.weighted_recall,
              rep.weighted_f1, weighted_auc(curves, truth));
}

int run(int argc, char **argv) {
  CLI::App app{"VGG-Lite + CEEM micro-framework"};
  app.set_version_flag("--version", "ceemkit 1.0.0");
  app.require_subcommand(1);
  std::size_t threads = 1;
  app.add_option("--threads", threads, "Worker thread cap")
      ->envname("CEEMKIT_THREADS")
      ->check(CLI::PositiveNumber);

  // enhance
  auto *enh = app.add_subcommand("enhance", "Apply negative / pooling "
                                            "pipeline to an image");
  std::string enh_in, enh_out, enh_ops = "negative,twomaxmin";
  std::size_t enh_pool = 3, enh_stride = 2;
  enh->add_option("--input", enh_in, "Input image (PGM or PNG)")->required();
  enh->add_option("--output", enh_out, "Output image")->required();
  enh->add_option("--ops", enh_ops, "Comma list of negative,maxpool,"
                                    "maxminpool,twomaxmin");
  enh->add_option("--pool", enh_pool)->check(CLI::PositiveNumber);
  enh->add_option("--stride", enh_stride)->check(CLI::PositiveNumber);

  // summary
  auto *sum = app.add_subcommand("summary", "Print the layer/parameter table");
  ModelArgs sum_model;
  add_model_flags(sum, sum_model);
  std::size_t sum_size = 224;
  std::string sum_emit;
  sum->add_option("--input-size", sum_size)->check(CLI::PositiveNumber);
  sum->add_option("--emit-config", sum_emit,
                  "Also write the model as an editable config JSON");

  // gradcheck
  auto *gc = app.add_subcommand("gradcheck",
                                "Finite-difference check of backprop");
  ModelArgs gc_model;
  gc_model.scale = "tiny";
  add_model_flags(gc, gc_model);
  std::uint64_t gc_seed = 1;
  double gc_eps = 1e-5;
  std::size_t gc_samples = 50, gc_input = 8;
  bool gc_corrupt = false;
  gc->add_option("--seed", gc_seed);
  gc->add_option("--eps", gc_eps)->check(CLI::PositiveNumber);
  gc->add_option("--samples", gc_samples)->check(CLI::PositiveNumber);
  gc->add_option("--input-size", gc_input)->check(CLI::PositiveNumber);
  gc->add_flag("--corrupt-backward", gc_corrupt)->group("");  // test hook

  // train
  auto *tr = app.add_subcommand("train", "Train a model on a dataset "
                                         "directory");
  ModelArgs tr_model;
  add_model_flags(tr, tr_model);
  std::string tr_data, tr_out = "run";
  TrainConfig tr_cfg;
  std::size_t tr_resize = 224;
  tr->add_option("--data", tr_data, "Dataset root directory")->required();
  tr->add_option("--out", tr_out, "Output directory");
  tr->add_option("--epochs", tr_cfg.epochs)->check(CLI::PositiveNumber);
  tr->add_option("--batch", tr_cfg.batch_size)->check(CLI::PositiveNumber);
  tr->add_option("--lr", tr_cfg.lr0)->check(CLI::PositiveNumber);
  tr->add_option("--seed", tr_cfg.seed);
  tr->add_option("--resize", tr_resize)->check(CLI::PositiveNumber);
  tr->add_option("--patience", tr_cfg.patience,
                 "Early-stopping patience (0 = off)");

  // eval
  auto *ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string ev_data, ev_ckpt, ev_out = "eval";
  std::size_t ev_resize = 224, ev_batch = 16;
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--out", ev_out);
  ev->add_option("--resize", ev_resize)->check(CLI::PositiveNumber);
  ev->add_option("--batch", ev_batch)->check(CLI::PositiveNumber);

  // kfold
  auto *kf = app.add_subcommand("kfold", "Stratified k-fold cross "
                                         "validation");
  ModelArgs kf_model;
  add_model_flags(kf, kf_model);
  std::string kf_data, kf_out = "kfold";
  std::size_t kf_folds = 5, kf_resize = 64;
  TrainConfig kf_cfg;
  kf->add_option("--data", kf_data)->required();
  kf->add_option("--out", kf_out);
  kf->add_option("--folds", kf_folds)->check(CLI::PositiveNumber);
  kf->add_option("--epochs", kf_cfg.epochs)->check(CLI::PositiveNumber);
  kf->add_option("--batch", kf_cfg.batch_size)->check(CLI::PositiveNumber);
  kf->add_option("--lr", kf_cfg.lr0)->check(CLI::PositiveNumber);
  kf->add_option("--seed", kf_cfg.seed);
  kf->add_option("--resize", kf_resize)->check(CLI::PositiveNumber);

  // synth
  auto *sy = app.add_subcommand("synth", "Generate the synthetic imbalanced "
                                         "dataset");
  std::string sy_out;
  SynthSpec sy_spec;
  std::string sy_counts;
  sy->add_option("--out", sy_out, "Output dataset directory")->required();
  sy->add_option("--size", sy_spec.image_size)->check(CLI::PositiveNumber);
  sy->add_option("--noise", sy_spec.noise_level);
  sy->add_option("--seed", sy_spec.seed);
  sy->add_option("--counts", sy_counts,
                 "Comma list of per-class sample counts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help/version are success, misuse is 2
  }

  if (*enh) {
    std::vector<EnhanceOp> ops;
    try {
      ops = parse_enhance_ops(enh_ops);
    } catch (const ValueError &e) {
      throw UsageError(e.what());
    }
    enhance_preview(enh_in, enh_out, ops, enh_pool, enh_stride);
    std::printf("wrote %s\n", enh_out.c_str());
    return 0;
  }

  if (*sum) {
    ModelGraph g = build_model(sum_model);
    print_summary(g, sum_size);
    if (!sum_emit.empty())
      write_text(sum_emit, graph_to_config_json(g));
    return 0;
  }

  if (*gc) {
    ModelGraph g = build_model(gc_model);
    g.init_params(gc_seed);
    g.corrupt_backward(gc_corrupt);
    Rng rng(seed_for(gc_seed, "gradcheck-input"));
    Tensor batch({2, gc_input, gc_input, g.input_channels()});
    for (std::size_t i = 0; i < batch.size(); ++i)
      batch[i] = rng.uniform(0.0, 1.0);
    Tensor onehot({2, g.class_count()});
    for (std::size_t b = 0; b < 2; ++b)
      onehot.at(b, rng.index(g.class_count())) = 1.0;
    auto res = gradcheck_graph(g, batch, onehot, gc_eps, gc_samples, gc_seed);
    std::printf("max relative error over %zu sampled parameters: %.3e\n",
                res.checked, res.max_rel_err);
    return res.max_rel_err < 1e-4 ? 0 : 1;
  }

  if (*tr) {
    LabeledDataset ds = load_dir(tr_data, tr_resize);
    normalize_images(ds.images);
    ModelGraph g = build_model(tr_model);
    if (ds.class_names.size() != g.class_count())
      throw ValueError("dataset has " + std::to_string(ds.class_names.size()) +
                       " classes but the model expects " +
                       std::to_string(g.class_count()));
    g.init_params(tr_cfg.seed);
    SplitIndices split =
        stratified_split(ds.labels, tr_cfg.ratio_train, tr_cfg.ratio_test,
                         tr_cfg.ratio_val, tr_cfg.seed);
    AdamState state;
    TrainLog log = fit(g, ds.images, ds.labels, split.train, split.val,
                       tr_cfg, &state, [](const EpochRow &r) {
                         std::printf("epoch %zu lr %.3e loss %.4f acc %.4f "
                                     "val_loss %.4f val_acc %.4f %.1fs\n",
                                     r.epoch, r.lr, r.train_loss, r.train_acc,
                                     r.val_loss, r.val_acc, r.secs);
                       });
    fs::create_directories(tr_out);
    TrainState ts;
    ts.epoch = log.rows.size();
    ts.lr = log.rows.empty() ? tr_cfg.lr0 : log.rows.back().lr;
    ts.step = state.t;
    ts.moments = state.moments;
    save_checkpoint(g, (fs::path(tr_out) / "checkpoint.ckpt").string(), &ts);
    // secs zeroed in the file so identical seeds give identical bytes;
    // wall time is still printed per epoch above
    write_text((fs::path(tr_out) / "trainlog.csv").string(),
               log.to_csv(false));
    std::printf("wrote %s/checkpoint.ckpt and %s/trainlog.csv\n",
                tr_out.c_str(), tr_out.c_str());
    return 0;
  }

  if (*ev) {
    ModelGraph g = load_checkpoint(ev_ckpt);
    LabeledDataset ds = load_dir(ev_data, ev_resize);
    normalize_images(ds.images);
    if (ds.class_names.size() != g.class_count())
      throw ValueError("dataset class count does not match checkpoint");
    std::vector<std::size_t> all(ds.labels.size());
    for (std::size_t i = 0; i < all.size(); ++i)
      all[i] = i;
    EvalResult res = evaluate(g, ds.images, ds.labels, all, ev_batch);
    write_eval_outputs(ev_out, ds.labels, res, ds.class_names);
    return 0;
  }

  if (*kf) {
    LabeledDataset ds = load_dir(kf_data, kf_resize);
    normalize_images(ds.images);
    fs::create_directories(kf_out);
    const std::size_t K = ds.class_names.size();
    TrainFn train_fn = [&](const std::vector<std::size_t> &train_idx,
                           const std::vector<std::size_t> &test_idx,
                           std::size_t fold) {
      ModelGraph g = build_model(kf_model);
      if (K != g.class_count())
        throw ValueError("dataset class count does not match model");
      TrainConfig cfg = kf_cfg;
      cfg.seed = kf_cfg.seed + fold;  // per-fold seed
      g.init_params(cfg.seed);
      fit(g, ds.images, ds.labels, train_idx, {}, cfg);
      EvalResult res =
          evaluate(g, ds.images, ds.labels, test_idx, cfg.batch_size);
      std::vector<std::size_t> truth;
      for (auto i : test_idx)
        truth.push_back(ds.labels[i]);
      ConfusionMatrix cm = confusion(truth, res.predictions, K,
                                     ds.class_names);
      write_text((fs::path(kf_out) /
                  ("report_fold" + std::to_string(fold + 1) + ".json"))
                     .string(),
                 report(cm).to_json());
      return FoldResult{res.predictions, res.scores};
    };
    FoldSummary summary =
        kfold(ds.labels, K, kf_folds, kf_cfg.seed, train_fn, threads);
    write_text((fs::path(kf_out) / "folds.csv").string(), summary.to_csv());
    std::printf("%s", summary.to_csv().c_str());
    return 0;
  }

  if (*sy) {
    if (!sy_counts.empty()) {
      sy_spec.counts.clear();
      std::size_t start = 0;
      while (start <= sy_counts.size()) {
        const std::size_t comma = sy_counts.find(',', start);
        sy_spec.counts.push_back(
            std::stoull(sy_counts.substr(start, comma - start)));
        if (comma == std::string::npos)
          break;
        start = comma + 1;
      }
      if (sy_spec.counts.size() != sy_spec.class_names.size())
        throw UsageError("--counts must list one count per class (6)");
    }
    LabeledDataset ds = synth_generate(sy_spec);
    write_dataset(ds, sy_out);
    std::printf("wrote %zu images under %s\n", ds.labels.size(),
                sy_out.c_str());
    return 0;
  }

  return 0;
}

} // namespace

int main(int argc, char **argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError &e) {
    std::fprintf(stderr, "ceemkit: error[usage]: %s\n", e.what());
    return 2;
  } catch (const Error &e) {
    std::fprintf(stderr, "ceemkit: error[%s]: %s\n", e.code().c_str(),
                 e.what());
    return 1;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "ceemkit: error[internal]: %s\n", e.what());
    return 1;
  }
}
