#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "matchlab/core.hpp"
#include "matchlab/encoding.hpp"
#include "matchlab/oracle.hpp"
#include "matchlab/rng.hpp"

namespace matchlab {

/// Dense row-major feature matrix with integer class labels in [0, class_count).
class Dataset {
public:
    Dataset() = default;
    Dataset(std::size_t dim, int class_count);

    std::size_t dim() const { return dim_; }
    int class_count() const { return class_count_; }
    std::size_t size() const { return labels_.size(); }
    bool empty() const { return labels_.empty(); }

    std::span<const double> row(std::size_t i) const {
        return {values_.data() + i * dim_, dim_};
    }
    int label(std::size_t i) const { return labels_[i]; }
    const std::vector<int>& labels() const { return labels_; }

    void add(std::span<const double> features, int label);
    std::vector<std::size_t> class_counts() const;

    bool operator==(const Dataset&) const = default;

private:
    std::size_t dim_ = 0;
    int class_count_ = 0;
    std::vector<double> values_;
    std::vector<int> labels_;
};

/// Balances classes by synthetic minority oversampling: each synthetic row is
/// x + u (x' - x) with u ~ U[0,1], x a row of the class and x' one of its k
/// nearest same-class neighbours (Euclidean). Every class ends at the majority
/// count; the original rows come first, unchanged. Throws for a class with
/// fewer than two rows. A k larger than (class size - 1) is clamped and a
/// warning appended to `warnings` (or written to std::clog when null).
Dataset smote_oversample(const Dataset& data, int k, Rng& rng,
                         std::vector<std::string>* warnings = nullptr);

struct TreeParams {
    int max_depth = 20;
    int min_leaf = 5;
    int features_per_split = 4;
    bool operator==(const TreeParams&) const = default;
};

/// Axis-aligned classification tree. Internal nodes send x[feature] <= threshold
/// to the left child; leaves keep the class histogram of their training rows.
class DecisionTree {
public:
    /// Internal nodes keep their two children side by side: `child` is the
    /// left one and `child + 1` the right one. For a leaf, `child` indexes the
    /// leaf histogram table.
    struct Node {
        double threshold = 0.0;
        int feature = -1;      // -1 marks a leaf
        int child = -1;
        bool is_leaf() const { return feature < 0; }
        bool operator==(const Node&) const = default;
    };

    DecisionTree() = default;
    DecisionTree(std::vector<Node> nodes, std::vector<int> leaf_counts, int class_count);

    std::span<const int> leaf_histogram(std::span<const double> x) const;
    int predict(std::span<const double> x) const;
    /// Adds the leaf histogram of each row of `rows` (row-major, `dim` wide)
    /// to the matching `class_count()`-wide slice of `votes`.
    void accumulate(std::span<const double> rows, std::size_t dim, std::span<long> votes) const;

    const std::vector<Node>& nodes() const { return nodes_; }
    int class_count() const { return class_count_; }
    std::size_t leaf_count() const;
    std::span<const int> histogram_of_leaf(int leaf) const {
        return {leaf_counts_.data() + static_cast<std::size_t>(leaf) * class_count_,
                static_cast<std::size_t>(class_count_)};
    }
    int depth() const;

    bool operator==(const DecisionTree&) const;

private:
    std::vector<Node> nodes_;
    std::vector<int> leaf_counts_;
    int class_count_ = 0;
};

/// Greedy Gini tree over all rows of `data`; each split searches a random
/// subset of `features_per_split` features.
DecisionTree train_tree(const Dataset& data, const TreeParams& params, Rng& rng);
/// Same, restricted to the given row indices (repeats allowed).
DecisionTree train_tree(const Dataset& data, std::span<const std::uint32_t> rows,
                        const TreeParams& params, Rng& rng);

struct ForestParams {
    int n_trees = 100;
    TreeParams tree;
    bool bootstrap = true;
    bool operator==(const ForestParams&) const = default;
};

/// RNG stream that train_forest hands to tree `index`.
Rng forest_tree_rng(std::uint64_t training_seed, int index);

class ForestModel {
public:
    ForestModel() = default;
    ForestModel(std::vector<DecisionTree> trees, ForestParams params, std::uint64_t training_seed,
                std::size_t feature_count, int class_count);

    /// Sum of the leaf histograms reached in every tree.
    std::vector<long> vote_histogram(std::span<const double> x) const;
    /// Argmax of vote_histogram; ties go to the lower class index.
    int predict(std::span<const double> x) const;
    /// predict() for every row of a row-major block; walks the forest tree by
    /// tree, which is much faster than row by row for large blocks.
    std::vector<int> predict_batch(std::span<const double> rows) const;

    const std::vector<DecisionTree>& trees() const { return trees_; }
    const ForestParams& params() const { return params_; }
    std::uint64_t training_seed() const { return training_seed_; }
    std::size_t feature_count() const { return feature_count_; }
    int class_count() const { return class_count_; }

private:
    std::vector<DecisionTree> trees_;
    ForestParams params_;
    std::uint64_t training_seed_ = 0;
    std::size_t feature_count_ = 0;
    int class_count_ = 0;
};

/// Bagged trees, each grown on a same-size bootstrap resample (or all rows when
/// bootstrap is off). Trees are trained on `threads` workers (0 = hardware).
ForestModel train_forest(const Dataset& data, const ForestParams& params,
                         std::uint64_t training_seed, unsigned threads = 0);

struct EvalReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<std::vector<long>> confusion;  // [truth][prediction]
    std::size_t samples = 0;
};

EvalReport evaluate_predictions(std::span<const int> truth, std::span<const int> predicted,
                                int class_count);
/// Exact-match accuracy, macro F1 and confusion on a held-out set.
EvalReport evaluate(const ForestModel& model, const Dataset& test);

/// Outcome predicted by an OutcomeModel.
enum class OutcomeKind { Rating, Block };

/// Forest plus the frozen feature scaling used to encode pairs.
struct OutcomeModel {
    OutcomeKind kind = OutcomeKind::Rating;
    ForestModel forest;
    FeatureScaling scaling;
};

/// Predicted star rating in [1, 5].
int predict_rating(const OutcomeModel& model, const Agent& seeker, const Agent& counselor);
/// Predicted block flag in {0, 1}.
int predict_block(const OutcomeModel& model, const Agent& seeker, const Agent& counselor);
/// Class index for an already encoded feature vector. Throws
/// std::invalid_argument when the length differs from the model's.
int predict_class(const OutcomeModel& model, std::span<const double> features);
/// Predicted labels (rating 1..5 or block 0/1) for rows of encoded pairs.
std::vector<int> predict_labels(const OutcomeModel& model, std::span<const double> rows);

/// Scaling fitted on the training rows of a corpus (both sides pooled).
FeatureScaling fit_scaling(const std::vector<LabeledPair>& corpus);
/// Encoded rows of one split; rating labels are shifted to 0..4.
Dataset make_dataset(const std::vector<LabeledPair>& corpus, OutcomeKind kind, bool train_split,
                     const FeatureScaling& scaling);

struct TrainingOptions {
    ForestParams forest;
    int smote_k = 5;
    std::uint64_t seed = 7;
    unsigned threads = 0;
};

struct TrainedPredictors {
    OutcomeModel rating;
    OutcomeModel block;
    EvalReport rating_eval;
    EvalReport block_eval;
    double rating_majority_baseline = 0.0;  // share of the test split's commonest class
    double block_majority_baseline = 0.0;
    std::vector<std::size_t> rating_counts_before;
    std::vector<std::size_t> rating_counts_after;
    std::vector<std::size_t> block_counts_before;
    std::vector<std::size_t> block_counts_after;
    double seconds = 0.0;
};

/// Scale, oversample and fit both outcome forests, then score them on the test split.
TrainedPredictors train_predictors(const std::vector<LabeledPair>& corpus,
                                   const TrainingOptions& options);

nlohmann::json model_to_json(const OutcomeModel& model);
OutcomeModel model_from_json(const nlohmann::json& j);
void save_model(const OutcomeModel& model, const std::string& path);
OutcomeModel load_model(const std::string& path);

nlohmann::json eval_to_json(const EvalReport& report);

} // namespace matchlab
