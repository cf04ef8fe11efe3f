// ecgan: one binary for the whole pipeline. Subcommands: generate-dataset,
// mask, train, translate, evaluate, plot. Exit codes: 0 success, 1 runtime
// error, 2 usage error, 3 numerical instability. Commands with randomness
// require --seed; nothing ever seeds from the clock. Every artifact
// directory receives a manifest.json capturing the resolved configuration,
// written on success and on failure.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ecgan/dataset.hpp"
#include "ecgan/evaluation.hpp"
#include "ecgan/manifest.hpp"
#include "ecgan/plot.hpp"
#include "ecgan/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Runs the body and writes the manifest into dir afterwards; on failure the
// manifest still lands, with the error recorded in its status.
template <typename Body>
void with_manifest(const std::string& dir, ecgan::RunManifest m, Body body) {
  m.started_at = ecgan::utc_timestamp();
  try {
    body(m);
  } catch (const std::exception& e) {
    m.status = std::string("error: ") + e.what();
    m.finished_at = ecgan::utc_timestamp();
    try {
      ecgan::write_manifest(dir, m);
    } catch (...) {
    }
    throw;
  }
  m.finished_at = ecgan::utc_timestamp();
  ecgan::write_manifest(dir, m);
}

std::string join_names(const std::vector<ecgan::ExpressionLabel>& labels) {
  std::string out;
  for (const auto& l : labels) {
    if (!out.empty()) out += ", ";
    out += l.name;
  }
  return out;
}

// ---------------------------------------------------------------------------
// generate-dataset
// ---------------------------------------------------------------------------

struct GenerateOpts {
  std::string out;
  int identities = 100;
  std::vector<std::string> expressions = {"neutral", "happy", "anger",
                                          "surprise"};
  int size = 64;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

int run_generate(const GenerateOpts& o) {
  const auto labels = ecgan::make_expression_set(o.expressions);
  ecgan::RunManifest m;
  m.command = "generate-dataset";
  m.config = {{"out", o.out},
              {"identities", o.identities},
              {"expressions", o.expressions},
              {"size", o.size},
              {"test-fraction", o.test_fraction},
              {"seed", o.seed}};
  m.outputs = {"index.json", "images/", "landmarks/", "masks/"};
  m.seed = o.seed;
  with_manifest(o.out, m, [&](ecgan::RunManifest&) {
    const ecgan::DatasetSplit split = ecgan::generate_dataset(
        o.identities, labels, o.size, o.size, o.seed, o.test_fraction);
    ecgan::save_dataset(split, o.out);
    std::cout << "wrote dataset to " << o.out << ": " << split.domain_x.size()
              << " train neutral, " << split.domain_y.size()
              << " train expressive, " << split.test_x.size() << " + "
              << split.test_y.size() << " test\n";
  });
  return 0;
}

// ---------------------------------------------------------------------------
// mask
// ---------------------------------------------------------------------------

struct MaskOpts {
  std::string landmarks;
  std::string out;
  int size = 0;
  int dilation = 3;
};

int run_mask(const MaskOpts& o) {
  ecgan::Landmarks lm = ecgan::detail::landmarks_from_json(
      ecgan::detail::load_json_file(o.landmarks), o.landmarks);
  if (lm.points.size() == 68) lm = ecgan::convert_landmarks_68(lm);
  const ecgan::Tensor mask = ecgan::landmarks_to_mask(
      lm, static_cast<std::size_t>(o.size), static_cast<std::size_t>(o.size),
      o.dilation);
  ecgan::write_png(o.out, ecgan::mask_to_bytes(mask));
  std::cout << "wrote " << o.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOpts {
  std::string dataset;
  std::string out;
  std::uint64_t seed = 0;
  long iterations = 2000;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_size = 1;
  double lambda1 = 10.0, lambda2 = 1.0, lambda3 = 5.0, lambda4 = 10.0;
  std::string condition_mode = "full";
  std::string mask_source = "analytic";
  int mask_dilation = 3;
  long checkpoint_every = 500;
  bool lr_decay = true;
  std::vector<int> enc_widths = {32, 64};
  int bottleneck_width = 256;
  std::vector<int> disc_widths = {32, 64, 128};
  std::string content_extractor;
  long content_extractor_steps = 300;
};

ecgan::TrainConfig build_train_config(const TrainOpts& o,
                                      const ecgan::DatasetSplit& split) {
  if (split.height != split.width)
    throw ecgan::FormatError("dataset images must be square, got " +
                             std::to_string(split.height) + "x" +
                             std::to_string(split.width));
  if (o.enc_widths.size() != 2)
    throw UsageError("--enc-widths takes exactly two values");
  if (o.disc_widths.size() != 3)
    throw UsageError("--disc-widths takes exactly three values");

  ecgan::TrainConfig cfg;
  cfg.arch.image_size = split.height;
  cfg.arch.image_channels = 3;
  cfg.arch.num_classes = static_cast<int>(split.expressions.size());
  cfg.arch.enc_ch1 = o.enc_widths[0];
  cfg.arch.enc_ch2 = o.enc_widths[1];
  cfg.arch.bottleneck_width = o.bottleneck_width;
  cfg.arch.disc_ch1 = o.disc_widths[0];
  cfg.arch.disc_ch2 = o.disc_widths[1];
  cfg.arch.disc_ch3 = o.disc_widths[2];
  if (o.condition_mode == "full") {
    cfg.arch.condition_bottleneck = true;
    cfg.arch.d_condition = ecgan::DiscriminatorCondition::kTiledConcat;
  } else if (o.condition_mode == "bottleneck") {
    cfg.arch.condition_bottleneck = true;
    cfg.arch.d_condition = ecgan::DiscriminatorCondition::kNone;
  } else {
    cfg.arch.condition_bottleneck = false;
    cfg.arch.d_condition = ecgan::DiscriminatorCondition::kNone;
  }
  cfg.weights = {o.lambda1, o.lambda2, o.lambda3, o.lambda4};
  cfg.learning_rate = o.lr;
  cfg.beta1 = o.beta1;
  cfg.beta2 = o.beta2;
  cfg.batch_size = o.batch_size;
  cfg.iterations = o.iterations;
  cfg.seed = o.seed;
  cfg.lr_decay = o.lr_decay;
  cfg.checkpoint_every = o.checkpoint_every;
  cfg.mask_source = o.mask_source == "landmarks"
                        ? ecgan::MaskSource::kLandmarks
                        : ecgan::MaskSource::kAnalytic;
  cfg.mask_dilation_radius = o.mask_dilation;
  cfg.content_extractor_steps = o.content_extractor_steps;
  if (!o.content_extractor.empty())
    cfg.content_extractor =
        ecgan::classifier_from_checkpoint(
            ecgan::load_checkpoint(o.content_extractor))
            .params;
  cfg.validate();
  return cfg;
}

json train_opts_to_json(const TrainOpts& o) {
  return {{"dataset", o.dataset},
          {"out", o.out},
          {"seed", o.seed},
          {"iterations", o.iterations},
          {"lr", o.lr},
          {"beta1", o.beta1},
          {"beta2", o.beta2},
          {"batch-size", o.batch_size},
          {"lambda1", o.lambda1},
          {"lambda2", o.lambda2},
          {"lambda3", o.lambda3},
          {"lambda4", o.lambda4},
          {"condition-mode", o.condition_mode},
          {"mask-source", o.mask_source},
          {"mask-dilation", o.mask_dilation},
          {"checkpoint-every", o.checkpoint_every},
          {"lr-decay", o.lr_decay},
          {"enc-widths", o.enc_widths},
          {"bottleneck-width", o.bottleneck_width},
          {"disc-widths", o.disc_widths},
          {"content-extractor", o.content_extractor},
          {"content-extractor-steps", o.content_extractor_steps}};
}

int run_train(const TrainOpts& o) {
  const ecgan::DatasetSplit split = ecgan::load_dataset(o.dataset);
  const ecgan::TrainConfig cfg = build_train_config(o, split);

  ecgan::RunManifest m;
  m.command = "train";
  m.config = train_opts_to_json(o);
  m.inputs = {o.dataset};
  m.outputs = {"metrics.jsonl", "checkpoint-final.ckpt"};
  m.seed = o.seed;
  with_manifest(o.out, m, [&](ecgan::RunManifest&) {
    const ecgan::TrainResult r = ecgan::train(cfg, split, o.out);
    std::cout << "trained " << r.iterations_run << " iterations\n"
              << "final checkpoint: " << r.checkpoint_path << "\n"
              << "metric log: " << r.metric_log_path << "\n";
  });
  return 0;
}

// ---------------------------------------------------------------------------
// translate
// ---------------------------------------------------------------------------

struct TranslateOpts {
  std::string checkpoint;
  std::string in;
  std::string in_dir;
  std::string out;
  std::string target;
  std::string direction = "auto";
};

ecgan::Tensor load_input_image(const std::string& path,
                               const ecgan::ArchConfig& arch) {
  const ecgan::ByteImage bytes = ecgan::read_png(path);
  if (bytes.dim(0) != static_cast<std::size_t>(arch.image_channels) ||
      bytes.dim(1) != static_cast<std::size_t>(arch.image_size) ||
      bytes.dim(2) != static_cast<std::size_t>(arch.image_size))
    throw ecgan::FormatError(
        path + ": expected " + std::to_string(arch.image_channels) + "x" +
        std::to_string(arch.image_size) + "x" +
        std::to_string(arch.image_size) + " image, got " +
        std::to_string(bytes.dim(0)) + "x" + std::to_string(bytes.dim(1)) +
        "x" + std::to_string(bytes.dim(2)));
  return ecgan::bytes_to_image(bytes);
}

int run_translate(const TranslateOpts& o) {
  if (o.in.empty() == o.in_dir.empty())
    throw UsageError("give exactly one of --in or --in-dir");

  const ecgan::TranslationCheckpoint ckpt =
      ecgan::translation_from_checkpoint(ecgan::load_checkpoint(o.checkpoint));

  const ecgan::ExpressionLabel* target = nullptr;
  for (const auto& e : ckpt.expressions)
    if (e.name == o.target) target = &e;
  if (!target)
    throw UsageError("unknown target expression '" + o.target +
                     "'; this checkpoint knows: " + join_names(ckpt.expressions));

  ecgan::Direction dir;
  if (o.direction == "x-to-y")
    dir = ecgan::Direction::kXToY;
  else if (o.direction == "y-to-x")
    dir = ecgan::Direction::kYToX;
  else
    dir = target->index == 0 ? ecgan::Direction::kYToX
                             : ecgan::Direction::kXToY;

  if (!o.in.empty()) {
    const ecgan::Tensor img = load_input_image(o.in, ckpt.arch);
    const ecgan::Tensor result = ecgan::translate(ckpt, img, *target, dir);
    ecgan::write_png(o.out, ecgan::image_to_bytes(result));
    std::cout << "wrote " << o.out << "\n";
    return 0;
  }

  std::vector<fs::path> files;
  if (!fs::is_directory(o.in_dir))
    throw ecgan::FormatError("not a directory: " + o.in_dir);
  for (const auto& entry : fs::directory_iterator(o.in_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw UsageError("no .png files in " + o.in_dir);

  ecgan::RunManifest m;
  m.command = "translate";
  m.config = {{"checkpoint", o.checkpoint}, {"in-dir", o.in_dir},
              {"out", o.out},               {"target-expression", o.target},
              {"direction", o.direction}};
  m.inputs = {o.checkpoint, o.in_dir};
  m.seed = ckpt.seed;
  with_manifest(o.out, m, [&](ecgan::RunManifest& man) {
    fs::create_directories(o.out);
    for (const fs::path& f : files) {
      const ecgan::Tensor img = load_input_image(f.string(), ckpt.arch);
      const ecgan::Tensor result = ecgan::translate(ckpt, img, *target, dir);
      const std::string name = f.stem().string() + "_" + target->name + ".png";
      ecgan::write_png((fs::path(o.out) / name).string(),
                       ecgan::image_to_bytes(result));
      man.outputs.push_back(name);
    }
    std::cout << "translated " << files.size() << " images to " << o.out
              << "\n";
  });
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateOpts {
  std::string run;
  std::string dataset;
  std::string out;
  std::uint64_t seed = 0;
  std::string checkpoint;  // defaults to <run>/checkpoint-final.ckpt
  int scorer_steps = 400;
  int scorer_batch = 8;
  double scorer_lr = 1e-3;
  std::vector<std::string> augment_expressions;  // empty = all
  bool no_augmentation = false;
  bool no_curve = false;
  bool no_embeddings = false;
  int shuffle_seeds = 5;
};

std::vector<ecgan::Sample> concat_samples(const std::vector<ecgan::Sample>& a,
                                          const std::vector<ecgan::Sample>& b) {
  std::vector<ecgan::Sample> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v * 100.0);
  return buf;
}

int run_evaluate(const EvaluateOpts& o) {
  const std::string ckpt_path =
      o.checkpoint.empty() ? (fs::path(o.run) / "checkpoint-final.ckpt").string()
                           : o.checkpoint;
  if (!fs::exists(fs::path(o.dataset) / "index.json"))
    throw UsageError("missing dataset index: " +
                     (fs::path(o.dataset) / "index.json").string());
  if (!fs::exists(fs::path(o.run) / "metrics.jsonl"))
    throw UsageError("missing metric log: " +
                     (fs::path(o.run) / "metrics.jsonl").string());
  if (!fs::exists(ckpt_path))
    throw UsageError("missing checkpoint: " + ckpt_path);
  if (o.shuffle_seeds < 1) throw UsageError("--shuffle-seeds must be >= 1");

  const ecgan::DatasetSplit split = ecgan::load_dataset(o.dataset);
  const ecgan::TranslationCheckpoint ckpt =
      ecgan::translation_from_checkpoint(ecgan::load_checkpoint(ckpt_path));
  if (ckpt.expressions != split.expressions)
    throw ecgan::FormatError("checkpoint expressions (" +
                             join_names(ckpt.expressions) +
                             ") do not match dataset expressions (" +
                             join_names(split.expressions) + ")");
  if (split.height != split.width ||
      split.height != ckpt.arch.image_size)
    throw ecgan::FormatError("dataset image size does not match checkpoint");

  std::vector<ecgan::ExpressionLabel> targets;
  if (o.augment_expressions.empty()) {
    targets = ckpt.expressions;
  } else {
    for (const auto& name : o.augment_expressions)
      targets.push_back(ecgan::find_expression(ckpt.expressions, name));
    if (targets.front().index != 0)
      throw UsageError("--augment-expressions must start with neutral");
  }

  ecgan::RunManifest m;
  m.command = "evaluate";
  m.config = {{"run", o.run},
              {"dataset", o.dataset},
              {"out", o.out},
              {"seed", o.seed},
              {"checkpoint", ckpt_path},
              {"scorer-steps", o.scorer_steps},
              {"scorer-batch", o.scorer_batch},
              {"scorer-lr", o.scorer_lr},
              {"augment-expressions", o.augment_expressions},
              {"no-augmentation", o.no_augmentation},
              {"no-curve", o.no_curve},
              {"no-embeddings", o.no_embeddings},
              {"shuffle-seeds", o.shuffle_seeds}};
  m.inputs = {o.run, o.dataset, ckpt_path};
  m.outputs = {"evaluation.json", "table.txt"};
  m.seed = o.seed;

  with_manifest(o.out, m, [&](ecgan::RunManifest& man) {
    ecgan::ClassifierTrainConfig scorer_cfg;
    scorer_cfg.arch.image_size = split.height;
    scorer_cfg.arch.image_channels = 3;
    scorer_cfg.arch.num_classes = static_cast<int>(split.expressions.size());
    scorer_cfg.steps = o.scorer_steps;
    scorer_cfg.batch_size = o.scorer_batch;
    scorer_cfg.learning_rate = o.scorer_lr;

    const auto real_train = concat_samples(split.domain_x, split.domain_y);
    const auto real_test = concat_samples(split.test_x, split.test_y);

    std::cout << "training scorer classifier on " << real_train.size()
              << " real images...\n";
    const ecgan::ClassifierParams scorer = ecgan::train_classifier(
        ecgan::detail::to_labeled(real_train), scorer_cfg, o.seed);
    const double baseline_acc =
        ecgan::accuracy(scorer, ecgan::detail::to_labeled(real_test));

    const auto gen_test = ecgan::translate_all(ckpt, real_test, targets);
    const ecgan::ScoreReport score =
        ecgan::conditioned_score(scorer, ecgan::detail::to_labeled(gen_test));
    const double cond_effect =
        ecgan::conditioning_effect(ckpt, split.test_x, scorer);

    json out_json = {{"format", "ecgan-evaluation"},
                     {"version", 1},
                     {"seed", o.seed},
                     {"checkpoint", ckpt_path},
                     {"iteration", ckpt.iteration},
                     {"expressions", [&] {
                        json a = json::array();
                        for (const auto& e : split.expressions)
                          a.push_back(e.name);
                        return a;
                      }()},
                     {"baseline_accuracy", baseline_acc},
                     {"score", ecgan::score_report_to_json(score)},
                     {"conditioning_effect", cond_effect}};

    std::vector<std::string> table;
    table.push_back("evaluation at iteration " +
                    std::to_string(ckpt.iteration));

    ecgan::AugmentationReport aug;
    std::size_t n_gen_train = 0;
    if (!o.no_augmentation) {
      const auto gen_train = ecgan::translate_all(ckpt, real_train, targets);
      n_gen_train = gen_train.size();
      std::cout << "augmentation experiment: " << gen_train.size()
                << " generated train, " << gen_test.size()
                << " generated test...\n";
      aug = ecgan::augmentation_experiment(real_train, gen_train, real_test,
                                           gen_test, {scorer_cfg, o.seed});
      out_json["augmentation"] = ecgan::augmentation_report_to_json(aug);

      table.push_back("");
      table.push_back("classification accuracy (percent)");
      char line[128];
      std::snprintf(line, sizeof line, "  %-16s %-12s %8s %8s %8s",
                    "train set", "test set", "acc", "n train", "n test");
      table.push_back(line);
      for (const auto& row : aug.rows) {
        std::snprintf(line, sizeof line, "  %-16s %-12s %8s %8ld %8ld",
                      row.train_set.c_str(), row.test_set.c_str(),
                      percent(row.accuracy).c_str(), row.n_train, row.n_test);
        table.push_back(line);
      }
    }

    table.push_back("");
    table.push_back("conditioned score on generated test (n=" +
                    std::to_string(score.n_samples) +
                    "): mean p(target) " + percent(score.mean_conditioned_probability) +
                    "%, top-1 " + percent(score.top1_accuracy) + "%");
    table.push_back("conditioning effect (target hit rate): " +
                    percent(cond_effect) + "%");
    table.push_back("baseline classifier accuracy on real test: " +
                    percent(baseline_acc) + "%");

    if (!o.no_curve) {
      std::map<long, json> curve;
      for (const auto& entry : fs::directory_iterator(o.run)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("checkpoint-", 0) != 0 ||
            entry.path().extension() != ".ckpt")
          continue;
        const ecgan::TranslationCheckpoint ck =
            ecgan::translation_from_checkpoint(
                ecgan::load_checkpoint(entry.path().string()));
        const auto gen = ecgan::translate_all(ck, real_test, targets);
        const ecgan::ScoreReport s =
            ecgan::conditioned_score(scorer, ecgan::detail::to_labeled(gen));
        const double ce = ecgan::conditioning_effect(ck, split.test_x, scorer);
        curve[ck.iteration] = {
            {"iteration", ck.iteration},
            {"mean_conditioned_probability", s.mean_conditioned_probability},
            {"top1_accuracy", s.top1_accuracy},
            {"conditioning_effect", ce}};
        std::cout << "curve: iteration " << ck.iteration << " scored\n";
      }
      json arr = json::array();
      for (const auto& [iter, entry] : curve) arr.push_back(entry);
      out_json["curve"] = std::move(arr);
    }

    if (!o.no_embeddings) {
      std::vector<std::string> names;
      for (const auto& e : split.expressions) names.push_back(e.name);
      fs::create_directories(o.out);
      const std::string emb_path =
          (fs::path(o.out) / "embeddings.txt").string();
      ecgan::export_embeddings(scorer, ecgan::detail::to_labeled(gen_test),
                               names, emb_path);
      const ecgan::EmbeddingTable tbl = ecgan::read_embeddings(emb_path);
      const double sil = ecgan::silhouette(tbl.points, tbl.labels);
      json shuffled = json::array();
      for (int i = 0; i < o.shuffle_seeds; ++i)
        shuffled.push_back(ecgan::silhouette(
            tbl.points,
            ecgan::shuffled_labels(tbl.labels, o.seed + static_cast<std::uint64_t>(i))));
      const ecgan::CentroidStats cs =
          ecgan::centroid_stats(tbl.points, tbl.labels);
      out_json["embeddings_file"] = "embeddings.txt";
      out_json["silhouette"] = {{"trained", sil},
                                {"shuffled", shuffled},
                                {"mean_inter_centroid", cs.mean_inter_centroid},
                                {"mean_intra_spread", cs.mean_intra_spread}};
      man.outputs.push_back("embeddings.txt");

      std::string shuf;
      for (const auto& v : shuffled) {
        if (!shuf.empty()) shuf += ", ";
        char b[32];
        std::snprintf(b, sizeof b, "%.4f", v.get<double>());
        shuf += b;
      }
      char line[160];
      std::snprintf(line, sizeof line,
                    "silhouette on generated test embeddings: %.4f "
                    "(shuffled labels: %s)",
                    sil, shuf.c_str());
      table.push_back(line);
    }

    out_json["generated"] = {{"n_train", n_gen_train},
                             {"n_test", gen_test.size()}};

    fs::create_directories(o.out);
    {
      std::ofstream jout(fs::path(o.out) / "evaluation.json");
      if (!jout)
        throw std::runtime_error("cannot write " +
                                 (fs::path(o.out) / "evaluation.json").string());
      jout << out_json.dump(2) << "\n";
    }
    {
      std::ofstream tout(fs::path(o.out) / "table.txt");
      for (const auto& l : table) tout << l << "\n";
    }
    for (const auto& l : table) std::cout << l << "\n";
    std::cout << "wrote " << (fs::path(o.out) / "evaluation.json").string()
              << "\n";
  });
  return 0;
}

// ---------------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------------

struct PlotOpts {
  std::string run;
  std::string eval;
  std::string out;
};

int run_plot(const PlotOpts& o) {
  const fs::path log_path = fs::path(o.run) / "metrics.jsonl";
  if (!fs::exists(log_path))
    throw UsageError("missing metric log: " + log_path.string());
  const ecgan::MetricLog log = ecgan::read_metric_log(log_path.string());
  if (log.records.empty())
    throw UsageError("metric log has no iteration records, nothing to plot: " +
                     log_path.string());

  json eval_json;
  if (!o.eval.empty()) {
    const fs::path eval_path = fs::path(o.eval) / "evaluation.json";
    if (!fs::exists(eval_path))
      throw UsageError("missing evaluation report: " + eval_path.string());
    eval_json = ecgan::detail::load_json_file(eval_path);
  }

  ecgan::RunManifest m;
  m.command = "plot";
  m.config = {{"run", o.run}, {"eval", o.eval}, {"out", o.out}};
  m.inputs = {log_path.string()};
  if (!o.eval.empty()) m.inputs.push_back(o.eval);

  with_manifest(o.out, m, [&](ecgan::RunManifest& man) {
    fs::create_directories(o.out);
    auto save = [&](const char* name, const ecgan::ByteImage& img) {
      ecgan::write_png((fs::path(o.out) / name).string(), img);
      man.outputs.push_back(name);
      std::cout << "wrote " << (fs::path(o.out) / name).string() << "\n";
    };

    std::vector<double> xs;
    for (const auto& r : log.records)
      xs.push_back(static_cast<double>(r.iteration));
    auto series_of = [&](const char* name, auto getter) {
      ecgan::Series s{name, xs, {}};
      for (const auto& r : log.records) s.ys.push_back(getter(r));
      return s;
    };
    save("losses.png",
         ecgan::render_line_chart(
             "training losses",
             {series_of("g total", [](const auto& r) { return r.g.total; }),
              series_of("adv g",
                        [](const auto& r) { return r.g.adversarial_g; }),
              series_of("adv d",
                        [](const auto& r) { return r.g.adversarial_d; }),
              series_of("cycle", [](const auto& r) { return r.g.cycle; }),
              series_of("content", [](const auto& r) { return r.g.content; }),
              series_of("identity",
                        [](const auto& r) { return r.g.identity; }),
              series_of("mask", [](const auto& r) { return r.g.mask; })}));
    save("gradients.png",
         ecgan::render_line_chart(
             "gradient norms",
             {series_of("g xy",
                        [](const auto& r) { return r.grad_norm_g_xy; }),
              series_of("g yx",
                        [](const auto& r) { return r.grad_norm_g_yx; }),
              series_of("d x", [](const auto& r) { return r.grad_norm_d_x; }),
              series_of("d y",
                        [](const auto& r) { return r.grad_norm_d_y; })}));

    if (!eval_json.is_null()) {
      if (eval_json.contains("curve") && !eval_json["curve"].empty()) {
        ecgan::Series mp{"mean p(target)", {}, {}}, top{"top-1", {}, {}},
            ce{"conditioning effect", {}, {}};
        for (const auto& e : eval_json["curve"]) {
          const double it = e.at("iteration").get<double>();
          mp.xs.push_back(it);
          mp.ys.push_back(e.at("mean_conditioned_probability").get<double>());
          top.xs.push_back(it);
          top.ys.push_back(e.at("top1_accuracy").get<double>());
          ce.xs.push_back(it);
          ce.ys.push_back(e.at("conditioning_effect").get<double>());
        }
        save("score_vs_iteration.png",
             ecgan::render_line_chart("conditioned score vs iteration",
                                      {mp, top, ce}));
      } else {
        std::cerr << "note: evaluation report has no per-checkpoint curve; "
                     "skipping score_vs_iteration.png\n";
      }

      if (eval_json.contains("embeddings_file")) {
        const fs::path emb =
            fs::path(o.eval) /
            eval_json["embeddings_file"].get<std::string>();
        if (!fs::exists(emb))
          throw UsageError("missing embeddings table: " + emb.string());
        const ecgan::EmbeddingTable tbl =
            ecgan::read_embeddings(emb.string());
        save("embedding_scatter.png",
             ecgan::render_scatter("expression embedding (pca)",
                                   ecgan::pca_project_2d(tbl.points),
                                   tbl.labels, tbl.expression_names));
      }
    }
  });
  return 0;
}

// ---------------------------------------------------------------------------
// wiring
// ---------------------------------------------------------------------------

template <typename Fn>
int guard(Fn fn) {
  try {
    return fn();
  } catch (const ecgan::TrainingAborted& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ecgan::NumericalInstabilityError& e) {
    std::cerr << "error: numerical instability: " << e.what() << "\n";
    return 3;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"expression-conditional face translation pipeline"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "config file (key=value, [subcommand] sections); "
                 "command-line flags override file values");

  GenerateOpts gen;
  CLI::App* g = app.add_subcommand("generate-dataset",
                                   "render a synthetic face dataset");
  g->add_option("--out", gen.out, "output dataset directory")->required();
  g->add_option("--identities", gen.identities, "number of identities")
      ->capture_default_str();
  g->add_option("--expressions", gen.expressions,
                "expression names, neutral first")
      ->delimiter(',')
      ->capture_default_str();
  g->add_option("--size", gen.size, "square image size in pixels")
      ->capture_default_str();
  g->add_option("--test-fraction", gen.test_fraction,
                "fraction of identities held out per domain")
      ->capture_default_str();
  g->add_option("--seed", gen.seed, "RNG seed (required: runs never seed "
                                    "from the clock)")
      ->required();

  MaskOpts msk;
  CLI::App* mk = app.add_subcommand(
      "mask", "compute a face mask from a landmark file");
  mk->add_option("--landmarks", msk.landmarks, "landmark json file")
      ->required();
  mk->add_option("--out", msk.out, "output mask png")->required();
  mk->add_option("--size", msk.size, "square canvas size in pixels")
      ->required();
  mk->add_option("--dilation", msk.dilation, "dilation radius in pixels")
      ->capture_default_str();

  TrainOpts tr;
  CLI::App* t = app.add_subcommand("train", "train the translation model");
  t->add_option("--dataset", tr.dataset, "dataset directory")->required();
  t->add_option("--out", tr.out, "output run directory")->required();
  t->add_option("--seed", tr.seed, "RNG seed")->required();
  t->add_option("--iterations", tr.iterations, "optimization steps")
      ->capture_default_str();
  t->add_option("--lr", tr.lr, "initial Adam learning rate")
      ->capture_default_str();
  t->add_option("--beta1", tr.beta1, "Adam beta1")->capture_default_str();
  t->add_option("--beta2", tr.beta2, "Adam beta2")->capture_default_str();
  t->add_option("--batch-size", tr.batch_size, "images per step per domain")
      ->capture_default_str();
  t->add_option("--lambda1", tr.lambda1, "cycle-consistency weight")
      ->capture_default_str();
  t->add_option("--lambda2", tr.lambda2, "content-feature weight")
      ->capture_default_str();
  t->add_option("--lambda3", tr.lambda3, "identity weight")
      ->capture_default_str();
  t->add_option("--lambda4", tr.lambda4, "masked-face weight")
      ->capture_default_str();
  t->add_option("--condition-mode", tr.condition_mode,
                "full = conditioned generator and discriminator, bottleneck = "
                "conditioned generator only, none = unconditional")
      ->check(CLI::IsMember({"full", "bottleneck", "none"}))
      ->capture_default_str();
  t->add_option("--mask-source", tr.mask_source,
                "analytic = stored dataset masks, landmarks = recompute from "
                "landmark files")
      ->check(CLI::IsMember({"analytic", "landmarks"}))
      ->capture_default_str();
  t->add_option("--mask-dilation", tr.mask_dilation,
                "dilation radius for landmark-derived masks")
      ->capture_default_str();
  t->add_option("--checkpoint-every", tr.checkpoint_every,
                "iterations between checkpoints")
      ->capture_default_str();
  t->add_flag("--lr-decay,!--no-lr-decay", tr.lr_decay,
              "linear decay to zero over the second half")
      ->capture_default_str();
  t->add_option("--enc-widths", tr.enc_widths,
                "generator encoder channel widths (two values)")
      ->delimiter(',')
      ->capture_default_str();
  t->add_option("--bottleneck-width", tr.bottleneck_width,
                "generator bottleneck width")
      ->capture_default_str();
  t->add_option("--disc-widths", tr.disc_widths,
                "discriminator channel widths (three values)")
      ->delimiter(',')
      ->capture_default_str();
  t->add_option("--content-extractor", tr.content_extractor,
                "classifier checkpoint for content features (default: train "
                "one on the dataset)");
  t->add_option("--content-extractor-steps", tr.content_extractor_steps,
                "training steps for the in-run content extractor")
      ->capture_default_str();

  TranslateOpts trn;
  CLI::App* x = app.add_subcommand("translate",
                                   "translate images with a trained model");
  x->add_option("--checkpoint", trn.checkpoint, "translation checkpoint")
      ->required();
  CLI::Option* in_opt = x->add_option("--in", trn.in, "input png");
  CLI::Option* dir_opt =
      x->add_option("--in-dir", trn.in_dir, "directory of input pngs");
  in_opt->excludes(dir_opt);
  x->add_option("--out", trn.out,
                "output png (with --in) or directory (with --in-dir)")
      ->required();
  x->add_option("--target-expression", trn.target, "target expression name")
      ->required();
  x->add_option("--direction", trn.direction,
                "generator to use; auto picks by target expression")
      ->check(CLI::IsMember({"auto", "x-to-y", "y-to-x"}))
      ->capture_default_str();

  EvaluateOpts ev;
  CLI::App* e = app.add_subcommand("evaluate",
                                   "score a trained run against its dataset");
  e->add_option("--run", ev.run, "training run directory")->required();
  e->add_option("--dataset", ev.dataset, "dataset directory")->required();
  e->add_option("--out", ev.out, "output directory")->required();
  e->add_option("--seed", ev.seed, "RNG seed for scorer training and "
                                   "shuffled-label controls")
      ->required();
  e->add_option("--checkpoint", ev.checkpoint,
                "checkpoint to evaluate (default: checkpoint-final.ckpt in "
                "the run directory)");
  e->add_option("--scorer-steps", ev.scorer_steps,
                "training steps for the scorer classifier")
      ->capture_default_str();
  e->add_option("--scorer-batch", ev.scorer_batch, "scorer batch size")
      ->capture_default_str();
  e->add_option("--scorer-lr", ev.scorer_lr, "scorer learning rate")
      ->capture_default_str();
  e->add_option("--augment-expressions", ev.augment_expressions,
                "expressions used when generating augmentation images "
                "(default: all; must start with neutral)")
      ->delimiter(',');
  e->add_flag("--no-augmentation", ev.no_augmentation,
              "skip the augmentation experiment");
  e->add_flag("--no-curve", ev.no_curve,
              "skip the per-checkpoint score curve");
  e->add_flag("--no-embeddings", ev.no_embeddings,
              "skip embedding export and silhouette analysis");
  e->add_option("--shuffle-seeds", ev.shuffle_seeds,
                "number of shuffled-label silhouette controls")
      ->capture_default_str();

  PlotOpts pl;
  CLI::App* p = app.add_subcommand("plot", "render metric and score charts");
  p->add_option("--run", pl.run, "training run directory with metrics.jsonl")
      ->required();
  p->add_option("--eval", pl.eval,
                "evaluation output directory (enables score and embedding "
                "charts)");
  p->add_option("--out", pl.out, "output directory for png files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return 2;
  }

  if (*g) return guard([&] { return run_generate(gen); });
  if (*mk) return guard([&] { return run_mask(msk); });
  if (*t) return guard([&] { return run_train(tr); });
  if (*x) return guard([&] { return run_translate(trn); });
  if (*e) return guard([&] { return run_evaluate(ev); });
  if (*p) return guard([&] { return run_plot(pl); });
  return 2;
}
