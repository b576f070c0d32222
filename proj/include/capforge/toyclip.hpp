#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace capforge {

// Dual linear encoder over precomputed feature vectors.
struct EncoderParams {
  Eigen::MatrixXd w_img;  // d_out x d_img
  Eigen::MatrixXd w_txt;  // d_out x d_txt
  Eigen::VectorXd b_img;  // zero-length when unused
  Eigen::VectorXd b_txt;
};

enum class Optimizer { SGD, AdamW };

struct TrainConfig {
  int batch_size = 32;       // N
  double temperature = 0.07;  // fixed, not learned
  double learning_rate = 0.05;
  double weight_decay = 0.01;  // decoupled; AdamW only
  int epochs = 10;
  uint64_t seed = 0;
  Optimizer optimizer = Optimizer::AdamW;
  bool use_bias = false;
  int d_out = 16;
};

// Desk-scale stand-in for an image-text corpus: a shared latent per
// item, linear image/text observation maps, per-view fixed style
// offsets emulating per-model caption style, and Gaussian noise.
struct SyntheticCorpusConfig {
  int n_items = 96;
  int n_eval = 128;
  int latent_dim = 16;
  int d_img = 32;
  int d_txt = 32;
  int k_views = 4;
  double noise_sigma = 0.6;       // generated-view noise
  double raw_noise_sigma = 3.0;   // raw-caption noise (the noisy baseline)
  double eval_noise_sigma = 0.8;  // held-out eval text noise
  double image_noise_sigma = 0.1;
  double style_bias_magnitude = 1.5;  // per-view fixed offset norm scale
  uint64_t seed = 0;
};

struct CorpusItem {
  Eigen::VectorXd image;
  Eigen::VectorXd raw_text;
  std::vector<Eigen::VectorXd> views;
};

struct SyntheticCorpus {
  std::vector<CorpusItem> train;
  std::vector<CorpusItem> eval;
  int d_img = 0;
  int d_txt = 0;
};

SyntheticCorpus make_synthetic_corpus(const SyntheticCorpusConfig& config);

// RawOnly: k_views == 0. MultiView(K): raw + first K generated views.
// Enumeration mode treats every (image, view) as an independent pair;
// sample mode draws one caption per item per epoch.
struct ViewPolicy {
  int k_views = 0;
  bool sample_per_step = false;
};

struct LossGrad {
  double loss = 0.0;
  Eigen::MatrixXd d_img;  // gradient w.r.t. the (normalized) image features
  Eigen::MatrixXd d_txt;
};

// Symmetric InfoNCE over a batch: L = (L_I + L_T) / 2 with row/column
// softmax over the similarity matrix. Rows must be L2-normalized by the
// caller. Throws NonFiniteInput.
LossGrad contrastive_loss(const Eigen::MatrixXd& img_feats, const Eigen::MatrixXd& txt_feats,
                          double temperature);

struct TrainResult {
  EncoderParams params;
  std::vector<double> loss_trace;  // one value per optimization step
};

TrainResult train(const SyntheticCorpus& corpus, const TrainConfig& config,
                  const ViewPolicy& policy);

enum class Direction { I2T, T2I };

struct RetrievalReport {
  Direction direction = Direction::I2T;
  double r1 = 0.0;   // percentages
  double r5 = 0.0;
  double r10 = 0.0;
  double mdr = 0.0;  // median rank, 1-based
};

// Metrics from a raw score matrix (rows = queries, columns =
// candidates; ground truth on the diagonal). Ties resolve by stable
// index order: an equal-scoring candidate with a lower index outranks.
RetrievalReport retrieval_from_scores(const Eigen::MatrixXd& scores, Direction direction);

struct EvalPair {
  Eigen::VectorXd image;
  Eigen::VectorXd text;
};

RetrievalReport eval_retrieval(const EncoderParams& params, const std::vector<EvalPair>& pairs,
                               Direction direction);

std::vector<EvalPair> eval_pairs_from_corpus(const SyntheticCorpus& corpus);

// Encoded + L2-normalized features for a batch of inputs.
Eigen::MatrixXd encode_images(const EncoderParams& params, const std::vector<Eigen::VectorXd>& x);
Eigen::MatrixXd encode_texts(const EncoderParams& params, const std::vector<Eigen::VectorXd>& x);

enum class AblationAxis { CaptionNoiseLength, BatchSize, NumViews, Epochs };

struct AblationRow {
  std::string axis;
  double setting = 0.0;
  uint64_t seed = 0;
  RetrievalReport report;  // I2T
};

// One train+eval per (grid point, seed); seeds are shared across grid
// points so comparisons are paired.
std::vector<AblationRow> ablation_sweep(AblationAxis axis, const std::vector<double>& grid,
                                        const TrainConfig& base_config,
                                        const SyntheticCorpusConfig& base_corpus,
                                        const std::vector<uint64_t>& seeds);

std::string ablation_to_csv(const std::vector<AblationRow>& rows);

std::string to_string(Direction direction);
std::string to_string(AblationAxis axis);

}  // namespace capforge
