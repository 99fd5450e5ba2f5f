/*
 * Copyright 2026 The resfeat Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line front end: toy data generation, feature extraction, PCA, SVM
// and sCNN heads, evaluation.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "resfeat/resfeat.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace resfeat;

namespace {

struct MiniFlags {
  std::vector<std::size_t> widths{16, 32, 64, 128};
  std::vector<std::size_t> depths{1, 1, 1, 1};

  void add(CLI::App* app) {
    app->add_option("--mini-widths", widths, "Stage output widths of the mini variant")
        ->delimiter(',')
        ->expected(4);
    app->add_option("--mini-depths", depths, "Blocks per stage of the mini variant")
        ->delimiter(',')
        ->expected(4);
  }

  ResNetConfig config() const {
    if (widths.size() != 4 || depths.size() != 4)
      throw InvalidConfig("mini variant needs four widths and four depths");
    return ResNetConfig::mini({widths[0], widths[1], widths[2], widths[3]},
                              {depths[0], depths[1], depths[2], depths[3]});
  }
};

ResNetConfig variant_config(const std::string& variant, const MiniFlags& mini) {
  if (variant == "resnet50") return ResNetConfig::resnet50();
  if (variant == "resnet152") return ResNetConfig::resnet152();
  if (variant == "mini") return mini.config();
  throw InvalidConfig("unknown variant '" + variant + "'");
}

CLI::App* leaf(CLI::App* parent, const std::string& name, const std::string& help) {
  auto* app = parent->add_subcommand(name, help);
  app->add_option("--config")->description(
      "Flat key=value configuration file; explicit flags take precedence");
  return app;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

// Expands `--config FILE` of the selected leaf subcommand. Every key naming
// one of the leaf's long options, and not already given on the command line,
// is appended as `--key=value`. Other keys are ignored.
std::vector<std::string> with_config(const CLI::App& app, std::vector<std::string> args) {
  const CLI::App* cur = &app;
  std::string config;
  std::set<std::string> given;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (const CLI::App* sub = cur->get_subcommand_no_throw(a)) {
      cur = sub;
      continue;
    }
    if (!a.starts_with("--")) continue;
    const std::string name = a.substr(2, a.find('=') - 2);
    given.insert(name);
    if (name != "config") continue;
    if (a.find('=') != std::string::npos) {
      config = a.substr(a.find('=') + 1);
    } else if (i + 1 < args.size()) {
      config = args[i + 1];
    }
  }
  if (config.empty()) return args;
  std::ifstream in(config);
  if (!in) throw InvalidConfig("cannot open config file '" + config + "'");
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidConfig("malformed config line '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    if (key.starts_with("--")) key = key.substr(2);
    if (key == "config" || given.count(key) || !cur->get_option_no_throw("--" + key)) continue;
    args.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
  }
  return args;
}

std::vector<int> read_label_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CorruptFile("cannot open '" + path.string() + "'");
  std::vector<int> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    try {
      out.push_back(std::stoi(line));
    } catch (const std::exception&) {
      throw CorruptFile("bad label line '" + line + "' in " + path.string());
    }
  }
  return out;
}

void write_label_file(const fs::path& path, const std::vector<int>& labels) {
  std::string text;
  for (int l : labels) text += std::to_string(l) + "\n";
  TensorStore::write_file_atomic(path, text);
}

bool is_rft1(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  return in.gcount() == 4 && std::string_view(magic, 4) == TensorStore::kMagic;
}

std::size_t class_count(const FeatureSet& fs) {
  if (!fs.meta.classes.empty()) return fs.meta.classes.size();
  int top = 0;
  for (int l : fs.labels) top = std::max(top, l);
  return static_cast<std::size_t>(top) + 1;
}

json eval_json(const EvalResult& r) {
  return {{"overall_accuracy", r.overall_accuracy},
          {"per_class_accuracy", r.per_class_accuracy},
          {"confusion", r.confusion}};
}

// Predicted label per row, or per image group when voting by mean score.
struct Predictions {
  std::vector<int> predicted;
  std::vector<int> truth;
};

Predictions finish_predictions(const FeatureSet& fs,
                               const std::vector<std::vector<double>>& scores,
                               const std::vector<int>& score_labels, const std::string& vote) {
  Predictions p;
  if (vote == "mean") {
    const auto v = vote_mean(fs.groups, fs.labels, scores);
    for (int k : v.prediction) p.predicted.push_back(score_labels[static_cast<std::size_t>(k)]);
    p.truth = v.truth;
  } else if (vote == "independent") {
    for (const auto& s : scores) {
      const auto k = std::max_element(s.begin(), s.end()) - s.begin();
      p.predicted.push_back(score_labels[static_cast<std::size_t>(k)]);
    }
    p.truth = fs.labels;
  } else {
    throw InvalidConfig("--vote must be 'mean' or 'independent'");
  }
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ResNet feature extraction, reduction and classification toolkit"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  // make-toy
  std::string toy_out;
  ToyConfig toy;
  MiniFlags toy_mini;
  auto* make_toy = leaf(&app, "make-toy", "Write the synthetic 3-class dataset and random mini weights");
  make_toy->add_option("--out", toy_out, "Output directory")->required();
  make_toy->add_option("--per-class", toy.per_class, "Images per class");
  make_toy->add_option("--size", toy.image_size, "Image side length");
  make_toy->add_option("--seed", toy.seed, "Random seed");
  toy_mini.add(make_toy);

  // inspect-weights
  std::string inspect_path;
  auto* inspect = leaf(&app, "inspect-weights", "List the entries of an RFT1 container");
  inspect->add_option("file", inspect_path, "Container path")->required();

  // extract
  struct {
    std::string weights, variant = "resnet50", tap = "res5c", data, out, split = "all",
                       pca, reduction = "none";
    bool augment = false;
    std::uint64_t seed = 0;
    std::size_t workers = 1, per_class_train = 0, per_class_val = 0;
    std::vector<double> mean{0.485, 0.456, 0.406};
    std::size_t size = 224;
    MiniFlags mini;
  } ex;
  auto* extract = leaf(&app, "extract", "Extract tap features for a dataset");
  extract->add_option("--weights", ex.weights, "RFT1 weight container")->required();
  extract->add_option("--variant", ex.variant, "resnet50 | resnet152 | mini")
      ->check(CLI::IsMember({"resnet50", "resnet152", "mini"}));
  extract->add_option("--tap", ex.tap, "res3d | res4f | res5c")
      ->check(CLI::IsMember({"res3d", "res4f", "res5c"}));
  extract->add_option("--data", ex.data, "Dataset root (one directory per class)")->required();
  extract->add_option("--out", ex.out, "Output feature cache")->required();
  extract->add_flag("--augment16", ex.augment, "Extract the 16 augmented views of every image");
  extract->add_option("--seed", ex.seed, "Seed for the dataset split");
  extract->add_option("--workers", ex.workers, "Extraction threads");
  extract->add_option("--split", ex.split, "all | train | val | test")
      ->check(CLI::IsMember({"all", "train", "val", "test"}));
  extract->add_option("--per-class-train", ex.per_class_train, "Training images per class");
  extract->add_option("--per-class-val", ex.per_class_val, "Validation images per class");
  extract->add_option("--pca", ex.pca, "Apply this PCA model to every row");
  extract->add_option("--reduction", ex.reduction, "none | flatten (ignored with --pca)")
      ->check(CLI::IsMember({"none", "flatten"}));
  extract->add_option("--mean", ex.mean, "Per-channel mean on the [0,1] scale")
      ->delimiter(',')
      ->expected(3);
  extract->add_option("--size", ex.size, "Network input side length");
  ex.mini.add(extract);

  // pca
  auto* pca_cmd = app.add_subcommand("pca", "Principal component reduction")->require_subcommand(1);
  struct {
    std::string in, out, model, train, val;
    std::size_t n = 0;
    std::vector<std::size_t> candidates;
    double C = 1.0;
    std::uint64_t seed = 0;
  } pc;
  auto* pca_fit_cmd = leaf(pca_cmd, "fit", "Fit PCA on a feature cache");
  pca_fit_cmd->add_option("--in", pc.in, "Feature cache")->required();
  pca_fit_cmd->add_option("--n", pc.n, "Number of components")->required();
  pca_fit_cmd->add_option("--out", pc.out, "Output PCA container")->required();
  auto* pca_apply_cmd = leaf(pca_cmd, "apply", "Project a feature cache");
  pca_apply_cmd->add_option("--model", pc.model, "PCA container")->required();
  pca_apply_cmd->add_option("--in", pc.in, "Feature cache")->required();
  pca_apply_cmd->add_option("--out", pc.out, "Output feature cache")->required();
  auto* pca_select_cmd = leaf(pca_cmd, "select", "Choose n by validation accuracy of a linear SVM");
  pca_select_cmd->add_option("--train", pc.train, "Training feature cache")->required();
  pca_select_cmd->add_option("--val", pc.val, "Validation feature cache")->required();
  pca_select_cmd->add_option("--candidates", pc.candidates, "Candidate sizes")
      ->delimiter(',')
      ->required();
  pca_select_cmd->add_option("--C", pc.C, "SVM regularization");
  pca_select_cmd->add_option("--seed", pc.seed, "SVM seed");

  // svm
  auto* svm_cmd = app.add_subcommand("svm", "One-vs-rest linear SVM")->require_subcommand(1);
  struct {
    std::string in, out, model, vote = "mean";
    double C = 0.0;
    std::vector<double> grid = default_c_grid();
    std::size_t folds = 4, max_iter = 1000;
    double tol = 1e-3;
    std::uint64_t seed = 0;
    bool no_normalize = false;
  } sv;
  auto svm_common = [&](CLI::App* a) {
    a->add_option("--seed", sv.seed, "Seed for coordinate order and folds");
    a->add_option("--tol", sv.tol, "Relative duality gap tolerance");
    a->add_option("--max-iter", sv.max_iter, "Maximum epochs");
    a->add_flag("--no-normalize", sv.no_normalize, "Disable unit-L2 row normalization");
    a->add_option("--folds", sv.folds, "Cross-validation folds");
    a->add_option("--grid", sv.grid, "C values for cross-validation")->delimiter(',');
  };
  auto* svm_train_cmd = leaf(svm_cmd, "train", "Train (C from --C, else chosen by cross-validation)");
  svm_train_cmd->add_option("--in", sv.in, "Feature cache")->required();
  svm_train_cmd->add_option("--out", sv.out, "Output model container")->required();
  svm_train_cmd->add_option("--C", sv.C, "Regularization constant (skips cross-validation)");
  svm_common(svm_train_cmd);
  auto* svm_predict_cmd = leaf(svm_cmd, "predict", "Predict labels for a feature cache");
  svm_predict_cmd->add_option("--model", sv.model, "Model container")->required();
  svm_predict_cmd->add_option("--in", sv.in, "Feature cache")->required();
  svm_predict_cmd->add_option("--out", sv.out, "Output prediction file (one label per line)")->required();
  svm_predict_cmd->add_option("--vote", sv.vote, "mean | independent")
      ->check(CLI::IsMember({"mean", "independent"}));
  auto* svm_cv_cmd = leaf(svm_cmd, "cv", "Cross-validate the C grid and print the report");
  svm_cv_cmd->add_option("--in", sv.in, "Feature cache")->required();
  svm_common(svm_cv_cmd);

  // scnn
  auto* scnn_cmd = app.add_subcommand("scnn", "Shallow CNN head")->require_subcommand(1);
  struct {
    std::string in, out, model, vote = "mean";
    TrainConfig train;
    ScnnConfig head;
    std::uint64_t init_seed = 0;
  } sc;
  auto* scnn_train_cmd = leaf(scnn_cmd, "train", "Train a head on unreduced tap features");
  scnn_train_cmd->add_option("--in", sc.in, "Feature cache (reduction=none)")->required();
  scnn_train_cmd->add_option("--out", sc.out, "Output head container")->required();
  scnn_train_cmd->add_option("--lr", sc.train.learning_rate, "Learning rate");
  scnn_train_cmd->add_option("--momentum", sc.train.momentum, "Momentum");
  scnn_train_cmd->add_option("--epochs", sc.train.epochs, "Epochs");
  scnn_train_cmd->add_option("--batch-size", sc.train.batch_size, "Minibatch size");
  scnn_train_cmd->add_option("--weight-decay", sc.train.weight_decay, "L2 weight decay");
  scnn_train_cmd->add_option("--seed", sc.train.seed, "Seed for initialization and shuffling");
  scnn_train_cmd->add_option("--conv-channels", sc.head.conv_channels, "1x1 conv output channels");
  scnn_train_cmd->add_option("--conv-layers", sc.head.conv_layers, "Number of 1x1 conv layers");
  scnn_train_cmd->add_option("--hidden", sc.head.hidden, "Hidden FC width");
  auto* scnn_eval_cmd = leaf(scnn_cmd, "eval", "Evaluate a head on a feature cache");
  scnn_eval_cmd->add_option("--model", sc.model, "Head container")->required();
  scnn_eval_cmd->add_option("--in", sc.in, "Feature cache")->required();
  scnn_eval_cmd->add_option("--out", sc.out, "Optional prediction file");
  scnn_eval_cmd->add_option("--vote", sc.vote, "mean | independent")
      ->check(CLI::IsMember({"mean", "independent"}));

  // eval
  std::string pred_path, truth_path;
  auto* eval_cmd = leaf(&app, "eval", "Compare predictions with ground truth");
  eval_cmd->add_option("--pred", pred_path, "Prediction file")->required();
  eval_cmd->add_option("--truth", truth_path, "Label file or feature cache")->required();

  std::vector<std::string> args(argv, argv + argc);
  try {
    args = with_config(app, std::move(args));
  } catch (const Error& e) {
    std::cerr << "error [" << e.kind() << "]: " << e.what() << "\n";
    return 2;
  }
  std::vector<char*> expanded;
  for (auto& a : args) expanded.push_back(a.data());
  const int expanded_argc = static_cast<int>(expanded.size());
  char** expanded_argv = expanded.data();
  CLI11_PARSE(app, expanded_argc, expanded_argv);

  try {
    if (*make_toy) {
      make_toy_dataset(toy_out, toy);
      const auto model = build_resnet<float>(toy_mini.config(), toy.seed);
      save_weights(model).save(fs::path(toy_out) / "mini.rft");
      std::cout << json{{"images", (fs::path(toy_out) / "images").string()},
                        {"weights", (fs::path(toy_out) / "mini.rft").string()},
                        {"classes", toy_classes()},
                        {"per_class", toy.per_class}}
                       .dump()
                << "\n";
    } else if (*inspect) {
      const auto store = TensorStore::load(inspect_path);
      std::size_t total = 0;
      for (const auto& [name, t] : store.entries()) {
        std::cout << name << "\t" << shape_string(t.shape()) << "\n";
        total += t.size();
      }
      std::cout << "# " << store.size() << " tensors, " << total << " values\n";
    } else if (*extract) {
      auto cfg = variant_config(ex.variant, ex.mini);
      const auto store = TensorStore::load(ex.weights);
      if (store.contains("head.fc.bias")) cfg.num_classes = store.get("head.fc.bias").dim(0);
      const auto model = load_weights(build_resnet<float>(cfg), store);
      auto data = ingest(ex.data);
      std::vector<std::size_t> idx;
      if (ex.split == "all") {
        idx = data.all_indices();
      } else {
        data = split(std::move(data), ex.per_class_train, ex.per_class_val, ex.seed);
        idx = data.indices(ex.split == "train" ? Split::Train
                                               : ex.split == "val" ? Split::Val : Split::Test);
      }
      ExtractOptions opt;
      opt.preprocess.size = ex.size;
      std::copy(ex.mean.begin(), ex.mean.end(), opt.preprocess.mean.begin());
      opt.augment = ex.augment;
      opt.workers = ex.workers;
      opt.reduction = ex.reduction == "flatten" ? Reduction::FlattenOnly : Reduction::None;
      PCAModel pca;
      if (!ex.pca.empty()) {
        pca = pca_from_store(TensorStore::load(ex.pca));
        opt.reduction = Reduction::Pca;
        opt.pca = &pca;
      }
      const auto fs = extract_features(model, data, idx, parse_tap(ex.tap), opt);
      save_features(fs, ex.out);
      std::cerr << "extracted " << fs.rows() << " rows of length " << fs.dim() << "\n";
    } else if (*pca_fit_cmd) {
      const auto fs = load_features(pc.in);
      pca_to_store(pca_fit(fs.features, pc.n)).save(pc.out);
    } else if (*pca_apply_cmd) {
      const auto pca = pca_from_store(TensorStore::load(pc.model));
      save_features(apply_pca(load_features(pc.in), pca), pc.out);
    } else if (*pca_select_cmd) {
      const auto tr = load_features(pc.train), va = load_features(pc.val);
      SvmOptions opt;
      opt.C = pc.C;
      opt.seed = pc.seed;
      const auto r = select_n(pc.candidates, tr.features, tr.labels, va.features, va.labels, opt);
      std::cout << json{{"candidates", r.candidates}, {"accuracy", r.accuracy},
                        {"chosen", r.chosen}}
                       .dump()
                << "\n";
    } else if (*svm_train_cmd || *svm_cv_cmd) {
      const auto fs = load_features(sv.in);
      SvmOptions opt;
      opt.seed = sv.seed;
      opt.tol = sv.tol;
      opt.max_iter = sv.max_iter;
      opt.normalize = !sv.no_normalize;
      json report;
      if (*svm_cv_cmd || sv.C <= 0.0) {
        const auto cv = cross_validate(fs.features, fs.labels, sv.grid, sv.folds, opt);
        report = {{"grid", cv.grid},
                  {"fold_accuracies", cv.fold_accuracies},
                  {"mean_accuracy", cv.mean_accuracy},
                  {"chosen_C", cv.chosen_C}};
        opt.C = cv.chosen_C;
      } else {
        opt.C = sv.C;
      }
      if (*svm_train_cmd) {
        const auto model = svm_train(fs.features, fs.labels, opt);
        svm_to_store(model).save(sv.out);
        save_sidecar(sv.out, svm_sidecar(model));
        report["C"] = opt.C;
      }
      std::cout << report.dump() << "\n";
    } else if (*svm_predict_cmd) {
      const auto store = TensorStore::load(sv.model);
      const auto model = svm_from_store(store, load_sidecar(sv.model));
      const auto fs = load_features(sv.in);
      if (fs.features.rank() != 2 || fs.dim() != model.dim())
        throw ShapeMismatch("features of length " + std::to_string(fs.dim()) +
                            " do not match the SVM input length " + std::to_string(model.dim()));
      std::vector<std::vector<double>> scores;
      for (std::size_t i = 0; i < fs.rows(); ++i)
        scores.push_back(svm_predict(model, fs.features.row(i)).scores);
      const auto p = finish_predictions(fs, scores, model.classes, sv.vote);
      write_label_file(sv.out, p.predicted);
      std::cout << eval_json(evaluate(p.predicted, p.truth, class_count(fs))).dump() << "\n";
    } else if (*scnn_train_cmd) {
      const auto fs = load_features(sc.in);
      if (fs.meta.reduction != "none")
        throw InvalidConfig("scnn training needs unreduced tap features (reduction=none)");
      const Shape shape = parse_shape(fs.meta.map_shape);
      auto head = scnn_build<float>(shape, class_count(fs), sc.train.seed, sc.head);
      const auto r = scnn_train(std::move(head), fs.features, fs.labels, sc.train);
      auto meta = scnn_sidecar(r.head);
      meta["classes"] = join(fs.meta.classes);
      scnn_to_store(r.head).save(sc.out);
      save_sidecar(sc.out, meta);
      std::cout << json{{"loss_curve", r.loss_curve}}.dump() << "\n";
    } else if (*scnn_eval_cmd) {
      const auto head = scnn_from_store(TensorStore::load(sc.model), load_sidecar(sc.model));
      const auto fs = load_features(sc.in);
      std::vector<std::vector<double>> scores;
      for (std::size_t i = 0; i < fs.rows(); ++i) {
        const auto row = fs.features.row(i);
        const auto pred = scnn_predict(head, Tensor({row.size()}, {row.begin(), row.end()}));
        scores.emplace_back(pred.probs.values().begin(), pred.probs.values().end());
      }
      std::vector<int> ids(head.num_classes);
      for (std::size_t k = 0; k < ids.size(); ++k) ids[k] = static_cast<int>(k);
      const auto p = finish_predictions(fs, scores, ids, sc.vote);
      if (!sc.out.empty()) write_label_file(sc.out, p.predicted);
      std::cout << eval_json(evaluate(p.predicted, p.truth, head.num_classes)).dump() << "\n";
    } else if (*eval_cmd) {
      const auto pred = read_label_file(pred_path);
      std::vector<int> truth;
      std::size_t K = 0;
      if (is_rft1(truth_path)) {
        const auto fs = load_features(truth_path);
        K = class_count(fs);
        truth = fs.labels;
        if (pred.size() != truth.size()) {
          // Predictions voted per image group.
          std::vector<std::vector<double>> dummy(fs.rows(), std::vector<double>(1, 0.0));
          truth = vote_mean(fs.groups, fs.labels, dummy).truth;
        }
      } else {
        truth = read_label_file(truth_path);
      }
      for (int l : pred) K = std::max(K, static_cast<std::size_t>(std::max(l, 0)) + 1);
      for (int l : truth) K = std::max(K, static_cast<std::size_t>(std::max(l, 0)) + 1);
      std::cout << eval_json(evaluate(pred, truth, K)).dump() << "\n";
    }
  } catch (const resfeat::Error& e) {
    std::cerr << "error [" << e.kind() << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
