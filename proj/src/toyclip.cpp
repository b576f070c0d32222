#include "capforge/toyclip.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "capforge/errors.hpp"
#include "capforge/hash.hpp"

namespace capforge {

namespace {

// Box-Muller over the deterministic generator; std::normal_distribution
// is not bit-stable across standard libraries.
class GaussianGen {
 public:
  explicit GaussianGen(uint64_t seed) : rng_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = std::max(rng_.next_double(), 1e-300);
    double u2 = rng_.next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  Eigen::VectorXd vector(int n, double sigma = 1.0) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = sigma * next();
    return v;
  }

  Eigen::MatrixXd matrix(int rows, int cols, double sigma = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = sigma * next();
    return m;
  }

  uint64_t next_below(uint64_t n) { return rng_.next_below(n); }

 private:
  SplitMix64 rng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticCorpusConfig& config) {
  GaussianGen gen(mix64(config.seed ^ 0x636f7270757355ull));
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.latent_dim));
  Eigen::MatrixXd a_img = gen.matrix(config.d_img, config.latent_dim, scale);
  Eigen::MatrixXd a_txt = gen.matrix(config.d_txt, config.latent_dim, scale);

  std::vector<Eigen::VectorXd> style_bias;
  for (int k = 0; k < config.k_views; ++k)
    style_bias.push_back(gen.vector(config.d_txt, config.style_bias_magnitude));

  auto make_item = [&](bool eval) {
    CorpusItem item;
    Eigen::VectorXd z = gen.vector(config.latent_dim);
    item.image = a_img * z + gen.vector(config.d_img, config.image_noise_sigma);
    double text_sigma = eval ? config.eval_noise_sigma : config.raw_noise_sigma;
    item.raw_text = a_txt * z + gen.vector(config.d_txt, text_sigma);
    for (int k = 0; k < config.k_views; ++k)
      item.views.push_back(a_txt * z + style_bias[k] +
                           gen.vector(config.d_txt, config.noise_sigma));
    return item;
  };

  SyntheticCorpus corpus;
  corpus.d_img = config.d_img;
  corpus.d_txt = config.d_txt;
  for (int i = 0; i < config.n_items; ++i) corpus.train.push_back(make_item(false));
  for (int i = 0; i < config.n_eval; ++i) corpus.eval.push_back(make_item(true));
  return corpus;
}

LossGrad contrastive_loss(const Eigen::MatrixXd& img_feats, const Eigen::MatrixXd& txt_feats,
                          double temperature) {
  if (!img_feats.allFinite() || !txt_feats.allFinite())
    throw NonFiniteInput("non-finite features");
  if (temperature <= 0.0) throw NonFiniteInput("temperature must be positive");
  const Eigen::Index n = img_feats.rows();
  if (txt_feats.rows() != n || txt_feats.cols() != img_feats.cols())
    throw DimensionMismatch("feature matrices must share shape");

  Eigen::MatrixXd logits = img_feats * txt_feats.transpose() / temperature;

  // row softmax (image -> text) and column softmax (text -> image)
  Eigen::MatrixXd row_p(n, n), col_p(n, n);
  double loss_i = 0.0, loss_t = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::RowVectorXd row = logits.row(i);
    double m = row.maxCoeff();
    Eigen::RowVectorXd e = (row.array() - m).exp();
    double z = e.sum();
    row_p.row(i) = e / z;
    loss_i -= std::log(e(i) / z);
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXd col = logits.col(j);
    double m = col.maxCoeff();
    Eigen::VectorXd e = (col.array() - m).exp();
    double z = e.sum();
    col_p.col(j) = e / z;
    loss_t -= std::log(e(j) / z);
  }
  double nd = static_cast<double>(n);

  LossGrad out;
  out.loss = (loss_i / nd + loss_t / nd) / 2.0;
  Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd g = ((row_p - eye) + (col_p - eye)) / (2.0 * nd);
  out.d_img = g * txt_feats / temperature;
  out.d_txt = g.transpose() * img_feats / temperature;
  return out;
}

namespace {

struct AdamState {
  Eigen::MatrixXd m, v;
  int t = 0;
};

void apply_update(Eigen::MatrixXd& w, const Eigen::MatrixXd& grad, AdamState& state,
                  const TrainConfig& config) {
  if (config.optimizer == Optimizer::SGD) {
    w -= config.learning_rate * grad;
    return;
  }
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (state.t == 0) {
    state.m = Eigen::MatrixXd::Zero(w.rows(), w.cols());
    state.v = Eigen::MatrixXd::Zero(w.rows(), w.cols());
  }
  ++state.t;
  state.m = b1 * state.m + (1.0 - b1) * grad;
  state.v = b2 * state.v + (1.0 - b2) * grad.cwiseProduct(grad);
  Eigen::MatrixXd mhat = state.m / (1.0 - std::pow(b1, state.t));
  Eigen::MatrixXd vhat = state.v / (1.0 - std::pow(b2, state.t));
  Eigen::MatrixXd denom = (vhat.array().sqrt() + eps).matrix();
  w -= config.learning_rate * (mhat.cwiseQuotient(denom) + config.weight_decay * w);
}

// û = u / ||u||; maps dL/dû back to dL/du.
Eigen::VectorXd normalize_backward(const Eigen::VectorXd& u, const Eigen::VectorXd& u_hat,
                                   const Eigen::VectorXd& g_hat) {
  double norm = u.norm();
  if (norm == 0.0) return Eigen::VectorXd::Zero(u.size());
  return (g_hat - g_hat.dot(u_hat) * u_hat) / norm;
}

Eigen::MatrixXd encode_normalized(const Eigen::MatrixXd& w, const Eigen::VectorXd& b,
                                  const std::vector<Eigen::VectorXd>& inputs) {
  Eigen::MatrixXd feats(static_cast<Eigen::Index>(inputs.size()), w.rows());
  for (size_t i = 0; i < inputs.size(); ++i) {
    Eigen::VectorXd u = w * inputs[i];
    if (b.size() > 0) u += b;
    double norm = u.norm();
    if (norm > 0) u /= norm;
    feats.row(static_cast<Eigen::Index>(i)) = u.transpose();
  }
  return feats;
}

}  // namespace

Eigen::MatrixXd encode_images(const EncoderParams& params,
                              const std::vector<Eigen::VectorXd>& x) {
  return encode_normalized(params.w_img, params.b_img, x);
}

Eigen::MatrixXd encode_texts(const EncoderParams& params,
                             const std::vector<Eigen::VectorXd>& x) {
  return encode_normalized(params.w_txt, params.b_txt, x);
}

TrainResult train(const SyntheticCorpus& corpus, const TrainConfig& config,
                  const ViewPolicy& policy) {
  if (corpus.train.empty()) throw EmptyCorpus();
  if (config.batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (config.temperature <= 0.0) throw ConfigError("temperature must be positive");

  GaussianGen init(mix64(config.seed ^ 0x696e6974ull));
  TrainResult result;
  result.params.w_img =
      init.matrix(config.d_out, corpus.d_img, 1.0 / std::sqrt(corpus.d_img));
  result.params.w_txt =
      init.matrix(config.d_out, corpus.d_txt, 1.0 / std::sqrt(corpus.d_txt));
  if (config.use_bias) {
    result.params.b_img = Eigen::VectorXd::Zero(config.d_out);
    result.params.b_txt = Eigen::VectorXd::Zero(config.d_out);
  }

  // (item index, caption pointer) pairs; raw + the first k views
  std::vector<std::pair<int, const Eigen::VectorXd*>> all_pairs;
  for (size_t i = 0; i < corpus.train.size(); ++i) {
    const CorpusItem& item = corpus.train[i];
    all_pairs.emplace_back(static_cast<int>(i), &item.raw_text);
    int k = std::min<int>(policy.k_views, static_cast<int>(item.views.size()));
    for (int v = 0; v < k; ++v)
      all_pairs.emplace_back(static_cast<int>(i), &item.views[v]);
  }

  AdamState st_wimg, st_wtxt, st_bimg, st_btxt;
  SplitMix64 shuffle_rng(mix64(config.seed ^ 0x73687566666c65ull));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::pair<int, const Eigen::VectorXd*>> pairs;
    if (policy.sample_per_step) {
      // one caption per item per epoch
      for (size_t i = 0; i < corpus.train.size(); ++i) {
        const CorpusItem& item = corpus.train[i];
        int k = std::min<int>(policy.k_views, static_cast<int>(item.views.size()));
        uint64_t pick = shuffle_rng.next_below(static_cast<uint64_t>(k + 1));
        const Eigen::VectorXd* text =
            pick == 0 ? &item.raw_text : &item.views[pick - 1];
        pairs.emplace_back(static_cast<int>(i), text);
      }
    } else {
      pairs = all_pairs;
    }
    // Fisher-Yates with the deterministic generator
    for (size_t i = pairs.size(); i > 1; --i) {
      size_t j = shuffle_rng.next_below(i);
      std::swap(pairs[i - 1], pairs[j]);
    }

    for (size_t start = 0; start < pairs.size(); start += config.batch_size) {
      size_t end = std::min(pairs.size(), start + static_cast<size_t>(config.batch_size));
      size_t n = end - start;
      if (n < 2) break;  // a singleton batch has no contrast

      std::vector<Eigen::VectorXd> img_in, txt_in;
      for (size_t p = start; p < end; ++p) {
        img_in.push_back(corpus.train[static_cast<size_t>(pairs[p].first)].image);
        txt_in.push_back(*pairs[p].second);
      }

      // forward: linear -> L2 normalize
      Eigen::Index nn = static_cast<Eigen::Index>(n);
      Eigen::MatrixXd u_img(nn, config.d_out), u_txt(nn, config.d_out);
      Eigen::MatrixXd f_img(nn, config.d_out), f_txt(nn, config.d_out);
      for (Eigen::Index i = 0; i < nn; ++i) {
        Eigen::VectorXd ui = result.params.w_img * img_in[static_cast<size_t>(i)];
        Eigen::VectorXd ut = result.params.w_txt * txt_in[static_cast<size_t>(i)];
        if (config.use_bias) {
          ui += result.params.b_img;
          ut += result.params.b_txt;
        }
        u_img.row(i) = ui.transpose();
        u_txt.row(i) = ut.transpose();
        f_img.row(i) = (ui.norm() > 0 ? Eigen::VectorXd(ui / ui.norm()) : ui).transpose();
        f_txt.row(i) = (ut.norm() > 0 ? Eigen::VectorXd(ut / ut.norm()) : ut).transpose();
      }

      LossGrad lg = contrastive_loss(f_img, f_txt, config.temperature);
      if (!std::isfinite(lg.loss)) throw DivergenceDetected("non-finite loss");
      result.loss_trace.push_back(lg.loss);

      Eigen::MatrixXd g_wimg = Eigen::MatrixXd::Zero(config.d_out, corpus.d_img);
      Eigen::MatrixXd g_wtxt = Eigen::MatrixXd::Zero(config.d_out, corpus.d_txt);
      Eigen::VectorXd g_bimg = Eigen::VectorXd::Zero(config.d_out);
      Eigen::VectorXd g_btxt = Eigen::VectorXd::Zero(config.d_out);
      for (Eigen::Index i = 0; i < nn; ++i) {
        Eigen::VectorXd du_img = normalize_backward(u_img.row(i).transpose(),
                                                    f_img.row(i).transpose(),
                                                    lg.d_img.row(i).transpose());
        Eigen::VectorXd du_txt = normalize_backward(u_txt.row(i).transpose(),
                                                    f_txt.row(i).transpose(),
                                                    lg.d_txt.row(i).transpose());
        g_wimg += du_img * img_in[static_cast<size_t>(i)].transpose();
        g_wtxt += du_txt * txt_in[static_cast<size_t>(i)].transpose();
        g_bimg += du_img;
        g_btxt += du_txt;
      }

      apply_update(result.params.w_img, g_wimg, st_wimg, config);
      apply_update(result.params.w_txt, g_wtxt, st_wtxt, config);
      if (config.use_bias) {
        Eigen::MatrixXd gb_i = g_bimg, gb_t = g_btxt;
        Eigen::MatrixXd bi = result.params.b_img, bt = result.params.b_txt;
        apply_update(bi, gb_i, st_bimg, config);
        apply_update(bt, gb_t, st_btxt, config);
        result.params.b_img = bi;
        result.params.b_txt = bt;
      }
    }
  }
  return result;
}

RetrievalReport retrieval_from_scores(const Eigen::MatrixXd& scores, Direction direction) {
  Eigen::MatrixXd s = scores;
  if (direction == Direction::T2I) s.transposeInPlace();
  const Eigen::Index m = s.rows();
  if (m == 0 || s.cols() != m) throw EmptyEvalSet();

  std::vector<int> ranks;
  ranks.reserve(static_cast<size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    double gt = s(i, i);
    int rank = 1;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j == i) continue;
      if (s(i, j) > gt || (s(i, j) == gt && j < i)) ++rank;
    }
    ranks.push_back(rank);
  }

  RetrievalReport report;
  report.direction = direction;
  double md = static_cast<double>(m);
  auto recall_at = [&](int k) {
    int hits = 0;
    for (int r : ranks)
      if (r <= k) ++hits;
    return 100.0 * hits / md;
  };
  report.r1 = recall_at(1);
  report.r5 = recall_at(5);
  report.r10 = recall_at(10);
  std::sort(ranks.begin(), ranks.end());
  size_t mid = ranks.size() / 2;
  report.mdr = ranks.size() % 2 ? ranks[mid] : 0.5 * (ranks[mid - 1] + ranks[mid]);
  return report;
}

RetrievalReport eval_retrieval(const EncoderParams& params, const std::vector<EvalPair>& pairs,
                               Direction direction) {
  if (pairs.empty()) throw EmptyEvalSet();
  std::vector<Eigen::VectorXd> images, texts;
  for (const auto& p : pairs) {
    images.push_back(p.image);
    texts.push_back(p.text);
  }
  Eigen::MatrixXd f_img = encode_images(params, images);
  Eigen::MatrixXd f_txt = encode_texts(params, texts);
  return retrieval_from_scores(f_img * f_txt.transpose(), direction);
}

std::vector<EvalPair> eval_pairs_from_corpus(const SyntheticCorpus& corpus) {
  std::vector<EvalPair> pairs;
  for (const auto& item : corpus.eval) pairs.push_back({item.image, item.raw_text});
  return pairs;
}

std::string to_string(Direction direction) {
  return direction == Direction::I2T ? "i2t" : "t2i";
}

std::string to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::CaptionNoiseLength: return "caption-noise-length";
    case AblationAxis::BatchSize: return "batch-size";
    case AblationAxis::NumViews: return "num-views";
    case AblationAxis::Epochs: return "epochs";
  }
  return "unknown";
}

std::vector<AblationRow> ablation_sweep(AblationAxis axis, const std::vector<double>& grid,
                                        const TrainConfig& base_config,
                                        const SyntheticCorpusConfig& base_corpus,
                                        const std::vector<uint64_t>& seeds) {
  if (grid.empty()) throw ConfigError("ablation grid is empty");
  std::vector<AblationRow> rows;
  for (double setting : grid) {
    for (uint64_t seed : seeds) {
      TrainConfig config = base_config;
      SyntheticCorpusConfig corpus_config = base_corpus;
      ViewPolicy policy{corpus_config.k_views, false};
      config.seed = seed;
      corpus_config.seed = seed;
      switch (axis) {
        case AblationAxis::CaptionNoiseLength:
          corpus_config.noise_sigma = setting;
          break;
        case AblationAxis::BatchSize:
          config.batch_size = static_cast<int>(setting);
          break;
        case AblationAxis::NumViews:
          policy.k_views = static_cast<int>(setting);
          break;
        case AblationAxis::Epochs:
          config.epochs = static_cast<int>(setting);
          break;
      }
      SyntheticCorpus corpus = make_synthetic_corpus(corpus_config);
      TrainResult trained = train(corpus, config, policy);
      AblationRow row;
      row.axis = to_string(axis);
      row.setting = setting;
      row.seed = seed;
      row.report = eval_retrieval(trained.params, eval_pairs_from_corpus(corpus), Direction::I2T);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "axis,setting,seed,direction,r1,r5,r10,mdr\n";
  for (const auto& row : rows) {
    out << row.axis << ',' << row.setting << ',' << row.seed << ','
        << to_string(row.report.direction) << ',' << row.report.r1 << ',' << row.report.r5
        << ',' << row.report.r10 << ',' << row.report.mdr << '\n';
  }
  return out.str();
}

}  // namespace capforge
