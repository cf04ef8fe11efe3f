#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ecgan/classifier.hpp"
#include "ecgan/dataset.hpp"
#include "ecgan/training.hpp"

// Quantitative protocol over a trained translator: classifier-probability
// score on conditioned translations, the three-condition augmentation
// experiment, the conditioning-effect fraction, and embedding export with
// cluster statistics.

namespace ecgan {

// ---------------------------------------------------------------------------
// Conditioned score
// ---------------------------------------------------------------------------

struct ScoreReport {
  double mean_conditioned_probability = 0.0;
  double top1_accuracy = 0.0;
  struct PerClass {
    long n = 0;
    long top1_hits = 0;
    double mean_conditioned_probability = 0.0;
  };
  std::vector<PerClass> per_class;  // indexed by class
  long n_samples = 0;
};

// Core statistic: each entry is (class-probability vector, conditioning
// label). Mean probability assigned to the conditioning class, and how often
// it wins outright.
inline ScoreReport score_from_probabilities(
    const std::vector<std::pair<Tensor, ExpressionLabel>>& scored) {
  if (scored.empty())
    throw std::invalid_argument("score_from_probabilities: empty sample list");
  const std::size_t k = scored.front().first.size();
  ScoreReport rep;
  rep.per_class.resize(k);
  rep.n_samples = static_cast<long>(scored.size());
  long hits = 0;
  double prob_sum = 0.0;
  for (const auto& [probs, label] : scored) {
    if (probs.size() != k)
      throw std::invalid_argument("score_from_probabilities: ragged widths");
    if (label.index < 0 || label.index >= static_cast<int>(k))
      throw std::invalid_argument("score_from_probabilities: label index " +
                                  std::to_string(label.index) +
                                  " outside [0," + std::to_string(k) + ")");
    const auto c = static_cast<std::size_t>(label.index);
    std::size_t arg = 0;
    for (std::size_t i = 1; i < k; ++i)
      if (probs[i] > probs[arg]) arg = i;
    const double p = probs[c];
    prob_sum += p;
    rep.per_class[c].n += 1;
    rep.per_class[c].mean_conditioned_probability += p;
    if (arg == c) {
      ++hits;
      rep.per_class[c].top1_hits += 1;
    }
  }
  rep.mean_conditioned_probability = prob_sum / static_cast<double>(rep.n_samples);
  rep.top1_accuracy = static_cast<double>(hits) / static_cast<double>(rep.n_samples);
  for (auto& pc : rep.per_class)
    if (pc.n > 0) pc.mean_conditioned_probability /= static_cast<double>(pc.n);
  return rep;
}

inline ScoreReport conditioned_score(
    const ClassifierParams& classifier,
    const std::vector<std::pair<Tensor, ExpressionLabel>>& generated) {
  if (generated.empty())
    throw std::invalid_argument("conditioned_score: empty sample list");
  std::vector<std::pair<Tensor, ExpressionLabel>> scored;
  scored.reserve(generated.size());
  for (const auto& [image, label] : generated)
    scored.emplace_back(classify(classifier, image), label);
  return score_from_probabilities(scored);
}

inline nlohmann::json score_report_to_json(const ScoreReport& r) {
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c)
    per.push_back({{"class", c},
                   {"n", r.per_class[c].n},
                   {"top1_hits", r.per_class[c].top1_hits},
                   {"mean_conditioned_probability",
                    r.per_class[c].mean_conditioned_probability}});
  return {{"mean_conditioned_probability", r.mean_conditioned_probability},
          {"top1_accuracy", r.top1_accuracy},
          {"n_samples", r.n_samples},
          {"per_class", per}};
}

// ---------------------------------------------------------------------------
// Augmentation experiment
// ---------------------------------------------------------------------------

struct AugmentationConfig {
  ClassifierTrainConfig classifier;
  std::uint64_t seed = 0;
};

struct AugmentationReport {
  struct Row {
    std::string train_set, test_set;
    double accuracy = 0.0;
    long n_train = 0, n_test = 0;
  };
  std::vector<Row> rows;  // baseline, augmented, generated-test

  const Row& baseline() const { return rows.at(0); }
  const Row& augmented() const { return rows.at(1); }
  const Row& generated_test() const { return rows.at(2); }
};

inline nlohmann::json augmentation_report_to_json(const AugmentationReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"train_set", row.train_set},
                    {"test_set", row.test_set},
                    {"accuracy", row.accuracy},
                    {"n_train", row.n_train},
                    {"n_test", row.n_test}});
  return {{"rows", rows}};
}

namespace detail {

inline std::vector<LabeledImage> to_labeled(const std::vector<Sample>& samples) {
  std::vector<LabeledImage> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) out.push_back({s.image, s.label});
  return out;
}

inline void require_disjoint_identities(const std::vector<const std::vector<Sample>*>& train_side,
                                        const std::vector<const std::vector<Sample>*>& test_side) {
  std::set<int> train_ids;
  for (const auto* v : train_side)
    for (const Sample& s : *v) train_ids.insert(s.identity_id);
  for (const auto* v : test_side)
    for (const Sample& s : *v)
      if (train_ids.count(s.identity_id))
        throw std::invalid_argument(
            "augmentation_experiment: identity " + std::to_string(s.identity_id) +
            " appears on both the train and test side");
}

}  // namespace detail

// Three conditions sharing one seed: a classifier trained on the real
// training images is scored on the real test set (baseline) and on the
// generated test set; a classifier trained on real plus generated images is
// scored on the real test set.
inline AugmentationReport augmentation_experiment(
    const std::vector<Sample>& real_train,
    const std::vector<Sample>& generated_train,
    const std::vector<Sample>& real_test,
    const std::vector<Sample>& generated_test, const AugmentationConfig& cfg) {
  if (real_train.empty() || real_test.empty())
    throw std::invalid_argument(
        "augmentation_experiment: real train and test sets must be nonempty");
  detail::require_disjoint_identities({&real_train, &generated_train},
                                      {&real_test, &generated_test});

  const std::vector<LabeledImage> train_real = detail::to_labeled(real_train);
  std::vector<LabeledImage> train_aug = train_real;
  for (const Sample& s : generated_train) train_aug.push_back({s.image, s.label});
  const std::vector<LabeledImage> test_real = detail::to_labeled(real_test);
  const std::vector<LabeledImage> test_gen = detail::to_labeled(generated_test);

  const ClassifierParams base_clf =
      train_classifier(train_real, cfg.classifier, cfg.seed, nullptr);
  const ClassifierParams aug_clf =
      train_classifier(train_aug, cfg.classifier, cfg.seed, nullptr);

  AugmentationReport rep;
  rep.rows.push_back({"real", "real", accuracy(base_clf, test_real),
                      static_cast<long>(train_real.size()),
                      static_cast<long>(test_real.size())});
  rep.rows.push_back({"real+generated", "real", accuracy(aug_clf, test_real),
                      static_cast<long>(train_aug.size()),
                      static_cast<long>(test_real.size())});
  rep.rows.push_back({"real", "generated", accuracy(base_clf, test_gen),
                      static_cast<long>(train_real.size()),
                      static_cast<long>(test_gen.size())});
  return rep;
}

// ---------------------------------------------------------------------------
// Conditioning effect
// ---------------------------------------------------------------------------

// For every neutral test image and every non-neutral target, translate and
// ask the classifier: the returned value is the fraction of pairs whose
// predicted class is the requested target.
inline double conditioning_effect(const TranslationCheckpoint& ckpt,
                                  const std::vector<Sample>& test_x,
                                  const ClassifierParams& classifier) {
  if (test_x.empty())
    throw std::invalid_argument("conditioning_effect: empty test set");
  std::vector<ExpressionLabel> targets;
  for (const auto& e : ckpt.expressions)
    if (e.index != ckpt.expressions.front().index) targets.push_back(e);
  if (targets.empty())
    throw std::invalid_argument("conditioning_effect: no non-neutral targets");

  long hits = 0, total = 0;
  for (const Sample& s : test_x) {
    for (const ExpressionLabel& target : targets) {
      const Tensor out = translate(ckpt, s.image, target, Direction::kXToY);
      const Tensor probs = classify(classifier, out);
      std::size_t arg = 0;
      for (std::size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[arg]) arg = i;
      if (static_cast<int>(arg) == target.index) ++hits;
      ++total;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

// Translate each sample along its natural direction: neutral sources map to
// every listed non-neutral target, expressive sources map back to neutral.
// The identity rides along; the label becomes the target.
inline std::vector<Sample> translate_all(
    const TranslationCheckpoint& ckpt, const std::vector<Sample>& sources,
    const std::vector<ExpressionLabel>& expressions) {
  if (expressions.empty())
    throw std::invalid_argument("translate_all: empty expression list");
  const ExpressionLabel neutral = expressions.front();
  std::vector<Sample> out;
  for (const Sample& s : sources) {
    if (s.label.index == neutral.index) {
      for (const auto& target : expressions) {
        if (target.index == neutral.index) continue;
        Sample g;
        g.image = translate(ckpt, s.image, target, Direction::kXToY);
        g.label = target;
        g.identity_id = s.identity_id;
        out.push_back(std::move(g));
      }
    } else {
      Sample g;
      g.image = translate(ckpt, s.image, neutral, Direction::kYToX);
      g.label = neutral;
      g.identity_id = s.identity_id;
      out.push_back(std::move(g));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embeddings, silhouette, projection
// ---------------------------------------------------------------------------

struct EmbeddingTable {
  std::vector<Tensor> points;  // each {feature_dim}
  std::vector<int> labels;
  std::vector<std::string> expression_names;
};

inline void export_embeddings(const ClassifierParams& classifier,
                              const std::vector<LabeledImage>& data,
                              const std::vector<std::string>& expression_names,
                              const std::string& out_path) {
  if (data.empty())
    throw std::invalid_argument("export_embeddings: empty image list");
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw std::runtime_error("export_embeddings: cannot write " + out_path);
  std::string names;
  for (const auto& n : expression_names)
    names += (names.empty() ? "" : ",") + n;
  out << "# embedding table: feature columns then label index; labels: "
      << names << "\n";
  char buf[32];
  for (const auto& [image, label] : data) {
    const Tensor f = embed(classifier, image);
    for (const double v : f) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf << ' ';
    }
    out << label.index << "\n";
  }
  if (!out) throw std::runtime_error("export_embeddings: write failed for " + out_path);
}

inline EmbeddingTable read_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open embedding table " + path);
  EmbeddingTable table;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("labels: ");
      if (pos != std::string::npos) {
        std::string rest = line.substr(pos + 8);
        std::size_t start = 0;
        while (start <= rest.size()) {
          const auto comma = rest.find(',', start);
          const std::string name =
              rest.substr(start, comma == std::string::npos ? std::string::npos
                                                            : comma - start);
          if (!name.empty()) table.expression_names.push_back(name);
          if (comma == std::string::npos) break;
          start = comma + 1;
        }
      }
      continue;
    }
    std::istringstream row(line);
    std::vector<double> vals;
    double v;
    while (row >> v) vals.push_back(v);
    if (vals.size() < 2)
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": embedding row needs features and a label");
    const int label = static_cast<int>(vals.back());
    vals.pop_back();
    Tensor point({vals.size()});
    std::copy(vals.begin(), vals.end(), point.begin());
    if (!table.points.empty() && point.size() != table.points.front().size())
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": ragged embedding row");
    table.points.push_back(std::move(point));
    table.labels.push_back(label);
  }
  if (table.points.empty()) throw FormatError(path + ": no embedding rows");
  return table;
}

// Mean silhouette coefficient under Euclidean distance. Points in singleton
// clusters contribute zero.
inline double silhouette(const std::vector<Tensor>& points,
                         const std::vector<int>& labels) {
  const std::size_t n = points.size();
  if (n != labels.size() || n < 2)
    throw std::invalid_argument("silhouette: need >= 2 labeled points");
  std::set<int> classes(labels.begin(), labels.end());
  if (classes.size() < 2)
    throw std::invalid_argument("silhouette: need >= 2 distinct labels");

  auto dist = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t d = 0; d < points[i].size(); ++d) {
      const double diff = points[i][d] - points[j][d];
      s += diff * diff;
    }
    return std::sqrt(s);
  };

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double own_sum = 0.0;
    long own_n = 0;
    std::vector<std::pair<double, long>> other;  // per-class (sum, count)
    std::vector<int> other_class;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = dist(i, j);
      if (labels[j] == labels[i]) {
        own_sum += d;
        ++own_n;
      } else {
        auto it = std::find(other_class.begin(), other_class.end(), labels[j]);
        if (it == other_class.end()) {
          other_class.push_back(labels[j]);
          other.push_back({d, 1});
        } else {
          auto& o = other[static_cast<std::size_t>(it - other_class.begin())];
          o.first += d;
          o.second += 1;
        }
      }
    }
    if (own_n == 0) continue;  // singleton cluster: contributes 0
    const double a = own_sum / static_cast<double>(own_n);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [sum, count] : other)
      b = std::min(b, sum / static_cast<double>(count));
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

inline std::vector<int> shuffled_labels(const std::vector<int>& labels,
                                        std::uint64_t seed) {
  std::vector<int> out = labels;
  Rng rng(mix_seed(seed, 0x5AFF1E));
  rng.shuffle(out.begin(), out.end());
  return out;
}

struct CentroidStats {
  double mean_inter_centroid = 0.0;  // mean pairwise distance between class means
  double mean_intra_spread = 0.0;    // mean distance of points to their class mean
};

inline CentroidStats centroid_stats(const std::vector<Tensor>& points,
                                    const std::vector<int>& labels) {
  if (points.empty() || points.size() != labels.size())
    throw std::invalid_argument("centroid_stats: bad inputs");
  const std::size_t dim = points.front().size();
  std::vector<int> classes;
  for (int l : labels)
    if (std::find(classes.begin(), classes.end(), l) == classes.end())
      classes.push_back(l);
  std::sort(classes.begin(), classes.end());

  std::vector<Tensor> centroids;
  for (int c : classes) {
    Tensor mean({dim});
    long n = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (labels[i] != c) continue;
      for (std::size_t d = 0; d < dim; ++d) mean[d] += points[i][d];
      ++n;
    }
    for (auto& v : mean) v /= static_cast<double>(n);
    centroids.push_back(std::move(mean));
  }

  auto dist = [&](const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = a[d] - b[d];
      s += diff * diff;
    }
    return std::sqrt(s);
  };

  CentroidStats st;
  long pairs = 0;
  for (std::size_t i = 0; i < centroids.size(); ++i)
    for (std::size_t j = i + 1; j < centroids.size(); ++j) {
      st.mean_inter_centroid += dist(centroids[i], centroids[j]);
      ++pairs;
    }
  if (pairs > 0) st.mean_inter_centroid /= static_cast<double>(pairs);

  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto c = static_cast<std::size_t>(
        std::find(classes.begin(), classes.end(), labels[i]) - classes.begin());
    st.mean_intra_spread += dist(points[i], centroids[c]);
  }
  st.mean_intra_spread /= static_cast<double>(points.size());
  return st;
}

// Deterministic 2-D projection onto the top two principal components. Each
// component's sign is fixed so its largest-magnitude coordinate is positive.
inline std::vector<std::array<double, 2>> pca_project_2d(
    const std::vector<Tensor>& points) {
  if (points.size() < 2)
    throw std::invalid_argument("pca_project_2d: need >= 2 points");
  const std::size_t n = points.size(), dim = points.front().size();
  for (const Tensor& p : points)
    if (p.size() != dim)
      throw std::invalid_argument("pca_project_2d: ragged points");

  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dim; ++d)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = points[i][d];
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;

  const Eigen::MatrixXd cov =
      (x.adjoint() * x) / static_cast<double>(n > 1 ? n - 1 : 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("pca_project_2d: eigendecomposition failed");

  // Eigenvalues come back ascending; take the last two columns.
  Eigen::MatrixXd basis(static_cast<Eigen::Index>(dim), 2);
  const Eigen::Index last = static_cast<Eigen::Index>(dim) - 1;
  basis.col(0) = solver.eigenvectors().col(last);
  if (dim >= 2)
    basis.col(1) = solver.eigenvectors().col(last - 1);
  else
    basis.col(1).setZero();
  for (int c = 0; c < 2; ++c) {
    Eigen::Index arg = 0;
    basis.col(c).cwiseAbs().maxCoeff(&arg);
    if (basis(arg, c) < 0.0) basis.col(c) = -basis.col(c);
  }

  const Eigen::MatrixXd proj = x * basis;
  std::vector<std::array<double, 2>> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = {proj(static_cast<Eigen::Index>(i), 0),
              proj(static_cast<Eigen::Index>(i), 1)};
  return out;
}

}  // namespace ecgan
