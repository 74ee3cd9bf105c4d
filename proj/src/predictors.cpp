#include "matchlab/predictors.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace matchlab {

// ---------------------------------------------------------------- Dataset

Dataset::Dataset(std::size_t dim, int class_count) : dim_(dim), class_count_(class_count) {
    if (dim == 0) throw std::invalid_argument("dataset dimension must be positive");
    if (class_count < 1) throw std::invalid_argument("dataset needs at least one class");
}

void Dataset::add(std::span<const double> features, int label) {
    if (features.size() != dim_) {
        throw std::invalid_argument("expected " + std::to_string(dim_) + " features, got " +
                                    std::to_string(features.size()));
    }
    if (label < 0 || label >= class_count_) {
        throw std::invalid_argument("label " + std::to_string(label) + " outside [0, " +
                                    std::to_string(class_count_) + ")");
    }
    values_.insert(values_.end(), features.begin(), features.end());
    labels_.push_back(label);
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(class_count_), 0);
    for (int l : labels_) ++counts[static_cast<std::size_t>(l)];
    return counts;
}

// ---------------------------------------------------------------- SMOTE

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = a[i] - b[i];
        d += t * t;
    }
    return d;
}

} // namespace

Dataset smote_oversample(const Dataset& data, int k, Rng& rng, std::vector<std::string>* warnings) {
    if (k < 1) throw std::invalid_argument("smote k must be at least 1");
    if (data.empty()) throw std::invalid_argument("cannot oversample an empty dataset");

    const auto counts = data.class_counts();
    const std::size_t majority = *std::max_element(counts.begin(), counts.end());

    std::vector<std::vector<std::size_t>> members(counts.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        members[static_cast<std::size_t>(data.label(i))].push_back(i);
    }

    Dataset out = data;
    std::vector<double> synth(data.dim());
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == majority) continue;
        if (counts[c] < 2) {
            throw std::invalid_argument("class " + std::to_string(c) + " has " +
                                        std::to_string(counts[c]) +
                                        " sample(s); oversampling needs at least 2");
        }
        const auto& rows = members[c];
        const std::size_t n = rows.size();
        std::size_t kk = static_cast<std::size_t>(k);
        if (kk > n - 1) {
            kk = n - 1;
            std::ostringstream msg;
            msg << "smote: class " << c << " has " << n << " samples; k reduced from " << k
                << " to " << kk;
            if (warnings) {
                warnings->push_back(msg.str());
            } else {
                std::clog << "warning: " << msg.str() << '\n';
            }
        }

        // Nearest neighbours within the class, ties broken by row order.
        std::vector<std::vector<std::size_t>> neighbours(n);
        std::vector<std::pair<double, std::size_t>> dist;
        dist.reserve(n);
        for (std::size_t a = 0; a < n; ++a) {
            dist.clear();
            for (std::size_t b = 0; b < n; ++b) {
                if (a == b) continue;
                dist.emplace_back(squared_distance(data.row(rows[a]), data.row(rows[b])), b);
            }
            std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk),
                              dist.end());
            neighbours[a].reserve(kk);
            for (std::size_t j = 0; j < kk; ++j) neighbours[a].push_back(dist[j].second);
        }

        // Cycle through a shuffled order of the class so base rows are used evenly.
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = n - 1; i > 0; --i) {
            std::swap(order[i], order[rng.below(i + 1)]);
        }
        const std::size_t deficit = majority - n;
        for (std::size_t j = 0; j < deficit; ++j) {
            const std::size_t base = order[j % n];
            const std::size_t other = neighbours[base][rng.below(kk)];
            const double u = rng.uniform();
            const auto x = data.row(rows[base]);
            const auto y = data.row(rows[other]);
            for (std::size_t d = 0; d < x.size(); ++d) synth[d] = x[d] + u * (y[d] - x[d]);
            out.add(synth, static_cast<int>(c));
        }
    }
    return out;
}

// ---------------------------------------------------------------- trees

DecisionTree::DecisionTree(std::vector<Node> nodes, std::vector<int> leaf_counts, int class_count)
    : nodes_(std::move(nodes)), leaf_counts_(std::move(leaf_counts)), class_count_(class_count) {
    if (nodes_.empty()) throw std::invalid_argument("tree has no nodes");
    if (class_count_ < 1) throw std::invalid_argument("tree needs at least one class");
    const std::size_t leaves = leaf_counts_.size() / static_cast<std::size_t>(class_count_);
    for (const auto& n : nodes_) {
        if (n.is_leaf()) {
            if (n.child < 0 || static_cast<std::size_t>(n.child) >= leaves) {
                throw std::invalid_argument("tree leaf index out of range");
            }
        } else if (n.child < 1 || static_cast<std::size_t>(n.child) + 1 >= nodes_.size()) {
            throw std::invalid_argument("tree child index out of range");
        }
    }
}

std::span<const int> DecisionTree::leaf_histogram(std::span<const double> x) const {
    const Node* node = nodes_.data();
    while (!node->is_leaf()) {
        node = nodes_.data() + node->child +
               (x[static_cast<std::size_t>(node->feature)] <= node->threshold ? 0 : 1);
    }
    return histogram_of_leaf(node->child);
}

int DecisionTree::predict(std::span<const double> x) const {
    const auto h = leaf_histogram(x);
    return static_cast<int>(std::max_element(h.begin(), h.end()) - h.begin());
}

void DecisionTree::accumulate(std::span<const double> rows, std::size_t dim,
                              std::span<long> votes) const {
    const std::size_t n = rows.size() / dim;
    const auto k = static_cast<std::size_t>(class_count_);
    const Node* nodes = nodes_.data();
    for (std::size_t r = 0; r < n; ++r) {
        const double* x = rows.data() + r * dim;
        const Node* node = nodes;
        while (node->feature >= 0) {
            node = nodes + node->child + (x[node->feature] <= node->threshold ? 0 : 1);
        }
        const int* h = leaf_counts_.data() + static_cast<std::size_t>(node->child) * k;
        long* v = votes.data() + r * k;
        for (std::size_t c = 0; c < k; ++c) v[c] += h[c];
    }
}

std::size_t DecisionTree::leaf_count() const {
    return class_count_ > 0 ? leaf_counts_.size() / static_cast<std::size_t>(class_count_) : 0;
}

int DecisionTree::depth() const {
    if (nodes_.empty()) return 0;
    int best = 0;
    std::vector<std::pair<int, int>> stack{{0, 0}};
    while (!stack.empty()) {
        auto [i, d] = stack.back();
        stack.pop_back();
        best = std::max(best, d);
        const auto& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.is_leaf()) {
            stack.emplace_back(n.child, d + 1);
            stack.emplace_back(n.child + 1, d + 1);
        }
    }
    return best;
}

// Leaves compare by histogram; where a histogram sits in the table is irrelevant.
bool DecisionTree::operator==(const DecisionTree& o) const {
    if (class_count_ != o.class_count_ || nodes_.size() != o.nodes_.size()) return false;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& a = nodes_[i];
        const Node& b = o.nodes_[i];
        if (a.is_leaf() != b.is_leaf()) return false;
        if (a.is_leaf()) {
            const auto ha = histogram_of_leaf(a.child);
            const auto hb = o.histogram_of_leaf(b.child);
            if (!std::equal(ha.begin(), ha.end(), hb.begin())) return false;
        } else if (!(a == b)) {
            return false;
        }
    }
    return true;
}

namespace {

class TreeBuilder {
public:
    TreeBuilder(const Dataset& data, const TreeParams& params, Rng& rng)
        : data_(data), params_(params), rng_(rng), classes_(data.class_count()) {
        features_.resize(data.dim());
        std::iota(features_.begin(), features_.end(), 0);
    }

    DecisionTree build(std::vector<std::uint32_t> rows) {
        rows_ = std::move(rows);
        nodes_.resize(1);
        grow(0, rows_.size(), 0, 0);
        return DecisionTree(std::move(nodes_), std::move(leaves_), classes_);
    }

private:
    struct Split {
        int feature = -1;
        double threshold = 0.0;
        double impurity = 0.0;  // n_left * gini_left + n_right * gini_right
    };

    void make_leaf(std::size_t slot, const std::vector<long>& counts) {
        DecisionTree::Node& node = nodes_[slot];
        node.feature = -1;
        node.child = static_cast<int>(leaves_.size() / static_cast<std::size_t>(classes_));
        for (long c : counts) leaves_.push_back(static_cast<int>(c));
    }

    // Fills nodes_[slot] from rows_[begin, end).
    void grow(std::size_t begin, std::size_t end, int depth, std::size_t slot) {
        const std::size_t n = end - begin;
        std::vector<long> counts(static_cast<std::size_t>(classes_), 0);
        for (std::size_t i = begin; i < end; ++i) ++counts[static_cast<std::size_t>(data_.label(rows_[i]))];
        const bool pure = std::count_if(counts.begin(), counts.end(), [](long c) { return c > 0; }) <= 1;
        const std::size_t min_leaf = static_cast<std::size_t>(std::max(1, params_.min_leaf));
        if (pure || depth >= params_.max_depth || n < 2 * min_leaf) return make_leaf(slot, counts);

        double sum_sq = 0.0;
        for (long c : counts) sum_sq += static_cast<double>(c) * static_cast<double>(c);
        const double parent = static_cast<double>(n) - sum_sq / static_cast<double>(n);

        const Split best = best_split(begin, end, counts, min_leaf);
        if (best.feature < 0 || best.impurity >= parent - 1e-12) return make_leaf(slot, counts);

        const auto f = static_cast<std::size_t>(best.feature);
        const auto mid = std::partition(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                                        rows_.begin() + static_cast<std::ptrdiff_t>(end),
                                        [&](std::uint32_t r) { return data_.row(r)[f] <= best.threshold; });
        const auto split_at = static_cast<std::size_t>(mid - rows_.begin());

        const std::size_t child = nodes_.size();
        nodes_.resize(child + 2);
        nodes_[slot].feature = best.feature;
        nodes_[slot].threshold = best.threshold;
        nodes_[slot].child = static_cast<int>(child);
        grow(begin, split_at, depth + 1, child);
        grow(split_at, end, depth + 1, child + 1);
    }

    Split best_split(std::size_t begin, std::size_t end, const std::vector<long>& counts,
                     std::size_t min_leaf) {
        const std::size_t dim = features_.size();
        const std::size_t tries =
            std::min<std::size_t>(dim, static_cast<std::size_t>(std::max(1, params_.features_per_split)));
        // Partial Fisher-Yates picks the candidate features for this node.
        for (std::size_t i = 0; i < tries; ++i) {
            std::swap(features_[i], features_[i + rng_.below(dim - i)]);
        }

        Split best;
        const std::size_t n = end - begin;
        std::vector<long> left(static_cast<std::size_t>(classes_));
        std::vector<long> right(static_cast<std::size_t>(classes_));
        for (std::size_t t = 0; t < tries; ++t) {
            const std::size_t f = features_[t];
            scratch_.clear();
            for (std::size_t i = begin; i < end; ++i) {
                const auto r = rows_[i];
                scratch_.emplace_back(data_.row(r)[f], data_.label(r));
            }
            std::sort(scratch_.begin(), scratch_.end());
            if (scratch_.front().first == scratch_.back().first) continue;

            std::fill(left.begin(), left.end(), 0);
            right = counts;
            double sq_left = 0.0;
            double sq_right = 0.0;
            for (long c : counts) sq_right += static_cast<double>(c) * static_cast<double>(c);
            for (std::size_t i = 0; i + 1 < n; ++i) {
                const auto c = static_cast<std::size_t>(scratch_[i].second);
                sq_left += 2.0 * static_cast<double>(left[c]) + 1.0;
                sq_right -= 2.0 * static_cast<double>(right[c]) - 1.0;
                ++left[c];
                --right[c];
                const std::size_t nl = i + 1;
                const std::size_t nr = n - nl;
                if (scratch_[i].first == scratch_[i + 1].first) continue;
                if (nl < min_leaf || nr < min_leaf) continue;
                const double impurity = (static_cast<double>(nl) - sq_left / static_cast<double>(nl)) +
                                        (static_cast<double>(nr) - sq_right / static_cast<double>(nr));
                if (best.feature < 0 || impurity < best.impurity - 1e-12) {
                    const double lo = scratch_[i].first;
                    const double hi = scratch_[i + 1].first;
                    double thr = lo + (hi - lo) / 2.0;
                    if (!(thr >= lo && thr < hi)) thr = lo;
                    best = Split{static_cast<int>(f), thr, impurity};
                }
            }
        }
        return best;
    }

    const Dataset& data_;
    const TreeParams& params_;
    Rng& rng_;
    int classes_;
    std::vector<std::size_t> features_;
    std::vector<std::uint32_t> rows_;
    std::vector<std::pair<double, int>> scratch_;
    std::vector<DecisionTree::Node> nodes_;
    std::vector<int> leaves_;
};

void check_tree_params(const TreeParams& p) {
    if (p.max_depth < 0) throw std::invalid_argument("max_depth must be >= 0");
    if (p.min_leaf < 1) throw std::invalid_argument("min_leaf must be >= 1");
    if (p.features_per_split < 1) throw std::invalid_argument("features_per_split must be >= 1");
}

} // namespace

DecisionTree train_tree(const Dataset& data, const TreeParams& params, Rng& rng) {
    std::vector<std::uint32_t> rows(data.size());
    std::iota(rows.begin(), rows.end(), 0u);
    return train_tree(data, rows, params, rng);
}

DecisionTree train_tree(const Dataset& data, std::span<const std::uint32_t> rows,
                        const TreeParams& params, Rng& rng) {
    check_tree_params(params);
    if (rows.empty()) throw std::invalid_argument("cannot train a tree on zero rows");
    for (auto r : rows) {
        if (r >= data.size()) throw std::invalid_argument("row index out of range");
    }
    TreeBuilder builder(data, params, rng);
    return builder.build(std::vector<std::uint32_t>(rows.begin(), rows.end()));
}

// ---------------------------------------------------------------- forest

Rng forest_tree_rng(std::uint64_t training_seed, int index) {
    return seeded_rng(training_seed, "forest.tree." + std::to_string(index));
}

ForestModel::ForestModel(std::vector<DecisionTree> trees, ForestParams params,
                         std::uint64_t training_seed, std::size_t feature_count, int class_count)
    : trees_(std::move(trees)),
      params_(params),
      training_seed_(training_seed),
      feature_count_(feature_count),
      class_count_(class_count) {
    if (trees_.empty()) throw std::invalid_argument("forest has no trees");
    for (const auto& t : trees_) {
        if (t.class_count() != class_count_) throw std::invalid_argument("tree class count mismatch");
        for (const auto& n : t.nodes()) {
            if (n.feature >= static_cast<int>(feature_count_)) {
                throw std::invalid_argument("tree splits on a feature beyond the model dimension");
            }
        }
    }
}

std::vector<long> ForestModel::vote_histogram(std::span<const double> x) const {
    if (x.size() != feature_count_) {
        throw std::invalid_argument("expected " + std::to_string(feature_count_) +
                                    " features, got " + std::to_string(x.size()));
    }
    std::vector<long> votes(static_cast<std::size_t>(class_count_), 0);
    for (const auto& t : trees_) {
        const auto h = t.leaf_histogram(x);
        for (std::size_t c = 0; c < h.size(); ++c) votes[c] += h[c];
    }
    return votes;
}

int ForestModel::predict(std::span<const double> x) const {
    const auto votes = vote_histogram(x);
    return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

std::vector<int> ForestModel::predict_batch(std::span<const double> rows) const {
    if (feature_count_ == 0 || rows.size() % feature_count_ != 0) {
        throw std::invalid_argument("row block is not a multiple of " +
                                    std::to_string(feature_count_) + " features");
    }
    const std::size_t n = rows.size() / feature_count_;
    const auto k = static_cast<std::size_t>(class_count_);
    std::vector<long> votes(n * k, 0);
    for (const auto& t : trees_) t.accumulate(rows, feature_count_, votes);
    std::vector<int> out(n);
    for (std::size_t r = 0; r < n; ++r) {
        const auto first = votes.begin() + static_cast<std::ptrdiff_t>(r * k);
        out[r] = static_cast<int>(std::max_element(first, first + static_cast<std::ptrdiff_t>(k)) - first);
    }
    return out;
}

ForestModel train_forest(const Dataset& data, const ForestParams& params,
                         std::uint64_t training_seed, unsigned threads) {
    if (params.n_trees < 1) throw std::invalid_argument("n_trees must be >= 1");
    check_tree_params(params.tree);
    if (data.empty()) throw std::invalid_argument("cannot train a forest on an empty dataset");

    const auto n_trees = static_cast<std::size_t>(params.n_trees);
    std::vector<DecisionTree> trees(n_trees);
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < n_trees; i = next++) {
            Rng rng = forest_tree_rng(training_seed, static_cast<int>(i));
            std::vector<std::uint32_t> rows(data.size());
            if (params.bootstrap) {
                for (auto& r : rows) r = static_cast<std::uint32_t>(rng.below(data.size()));
            } else {
                std::iota(rows.begin(), rows.end(), 0u);
            }
            trees[i] = train_tree(data, rows, params.tree, rng);
        }
    };

    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_trees));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        std::exception_ptr failure;
        std::mutex failure_mutex;
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back([&]() {
                try {
                    worker();
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next = n_trees;
                }
            });
        }
        for (auto& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }
    return ForestModel(std::move(trees), params, training_seed, data.dim(), data.class_count());
}

// ---------------------------------------------------------------- evaluation

EvalReport evaluate_predictions(std::span<const int> truth, std::span<const int> predicted,
                                int class_count) {
    if (truth.size() != predicted.size()) {
        throw std::invalid_argument("truth and prediction lengths differ");
    }
    if (truth.empty()) throw std::invalid_argument("cannot evaluate an empty test set");
    const auto k = static_cast<std::size_t>(class_count);
    EvalReport r;
    r.samples = truth.size();
    r.confusion.assign(k, std::vector<long>(k, 0));
    long correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= class_count || predicted[i] < 0 ||
            predicted[i] >= class_count) {
            throw std::invalid_argument("label outside [0, class_count)");
        }
        ++r.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
        if (truth[i] == predicted[i]) ++correct;
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());

    // Macro F1 over the classes that occur in either the truth or the predictions.
    double f1_sum = 0.0;
    int present = 0;
    for (std::size_t c = 0; c < k; ++c) {
        long tp = r.confusion[c][c];
        long fn = 0;
        long fp = 0;
        for (std::size_t j = 0; j < k; ++j) {
            if (j == c) continue;
            fn += r.confusion[c][j];
            fp += r.confusion[j][c];
        }
        if (tp + fn + fp == 0) continue;
        ++present;
        f1_sum += 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    }
    r.macro_f1 = present > 0 ? f1_sum / present : 0.0;
    return r;
}

EvalReport evaluate(const ForestModel& model, const Dataset& test) {
    if (test.empty()) throw std::invalid_argument("cannot evaluate an empty test set");
    if (test.dim() != model.feature_count()) {
        throw std::invalid_argument("expected " + std::to_string(model.feature_count()) +
                                    " features, got " + std::to_string(test.dim()));
    }
    std::vector<int> predicted(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) predicted[i] = model.predict(test.row(i));
    return evaluate_predictions(test.labels(), predicted, model.class_count());
}

// ---------------------------------------------------------------- outcome models

int predict_class(const OutcomeModel& model, std::span<const double> features) {
    return model.forest.predict(features);
}

std::vector<int> predict_labels(const OutcomeModel& model, std::span<const double> rows) {
    auto labels = model.forest.predict_batch(rows);
    if (model.kind == OutcomeKind::Rating) {
        for (int& l : labels) ++l;
    }
    return labels;
}

int predict_rating(const OutcomeModel& model, const Agent& seeker, const Agent& counselor) {
    if (model.kind != OutcomeKind::Rating) throw std::logic_error("model does not predict ratings");
    const auto x = encode_pair(seeker, counselor, model.scaling);
    return predict_class(model, x) + 1;
}

int predict_block(const OutcomeModel& model, const Agent& seeker, const Agent& counselor) {
    if (model.kind != OutcomeKind::Block) throw std::logic_error("model does not predict blocks");
    const auto x = encode_pair(seeker, counselor, model.scaling);
    return predict_class(model, x);
}

FeatureScaling fit_scaling(const std::vector<LabeledPair>& corpus) {
    FeatureScaling s;
    bool any = false;
    auto take = [&](const Agent& a) {
        const std::array<double, 3> v{static_cast<double>(a.birth_year),
                                      static_cast<double>(a.signup_day),
                                      static_cast<double>(a.experience_level)};
        for (std::size_t i = 0; i < 3; ++i) {
            if (!any) {
                s.min[i] = s.max[i] = v[i];
            } else {
                s.min[i] = std::min(s.min[i], v[i]);
                s.max[i] = std::max(s.max[i], v[i]);
            }
        }
        any = true;
    };
    for (const auto& p : corpus) {
        if (!p.train) continue;
        take(p.seeker);
        take(p.counselor);
    }
    if (!any) throw std::invalid_argument("corpus has no training rows");
    return s;
}

Dataset make_dataset(const std::vector<LabeledPair>& corpus, OutcomeKind kind, bool train_split,
                     const FeatureScaling& scaling) {
    Dataset d(kPairEncodingDim, kind == OutcomeKind::Rating ? 5 : 2);
    for (const auto& p : corpus) {
        if (p.train != train_split) continue;
        const auto x = encode_pair(p.seeker, p.counselor, scaling);
        d.add(x, kind == OutcomeKind::Rating ? p.rating - 1 : p.block);
    }
    return d;
}

namespace {

double majority_share(const Dataset& d) {
    const auto counts = d.class_counts();
    return static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
           static_cast<double>(d.size());
}

} // namespace

TrainedPredictors train_predictors(const std::vector<LabeledPair>& corpus,
                                   const TrainingOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    TrainedPredictors out;
    const FeatureScaling scaling = fit_scaling(corpus);

    auto fit = [&](OutcomeKind kind, const char* label, EvalReport& eval, double& baseline,
                   std::vector<std::size_t>& before, std::vector<std::size_t>& after) {
        const Dataset train = make_dataset(corpus, kind, true, scaling);
        const Dataset test = make_dataset(corpus, kind, false, scaling);
        before = train.class_counts();
        Rng smote_rng = seeded_rng(options.seed, std::string("smote.") + label);
        const Dataset balanced = smote_oversample(train, options.smote_k, smote_rng);
        after = balanced.class_counts();
        OutcomeModel model;
        model.kind = kind;
        model.scaling = scaling;
        const std::uint64_t forest_seed = seeded_rng(options.seed, std::string("forest.") + label).next_u64();
        model.forest = train_forest(balanced, options.forest, forest_seed, options.threads);
        eval = evaluate(model.forest, test);
        baseline = majority_share(test);
        return model;
    };

    out.rating = fit(OutcomeKind::Rating, "rating", out.rating_eval, out.rating_majority_baseline,
                     out.rating_counts_before, out.rating_counts_after);
    out.block = fit(OutcomeKind::Block, "block", out.block_eval, out.block_majority_baseline,
                    out.block_counts_before, out.block_counts_after);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

// ---------------------------------------------------------------- persistence

namespace {

constexpr const char* kModelFormat = "matchlab.forest";
constexpr int kModelVersion = 1;

nlohmann::json tree_to_json(const DecisionTree& t) {
    // Internal node: [feature, threshold, left, right]. Leaf: [-1, class counts...].
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes()) {
        if (!n.is_leaf()) {
            nodes.push_back({n.feature, n.threshold, n.child, n.child + 1});
        } else {
            nlohmann::json leaf = nlohmann::json::array({-1});
            for (int c : t.histogram_of_leaf(n.child)) leaf.push_back(c);
            nodes.push_back(std::move(leaf));
        }
    }
    return nodes;
}

DecisionTree tree_from_json(const nlohmann::json& j, int class_count) {
    std::vector<DecisionTree::Node> nodes;
    std::vector<int> leaves;
    for (const auto& e : j) {
        DecisionTree::Node n;
        n.feature = e.at(0).get<int>();
        if (n.feature >= 0) {
            if (e.size() != 4) throw std::invalid_argument("malformed tree node");
            n.threshold = e.at(1).get<double>();
            n.child = e.at(2).get<int>();
            if (e.at(3).get<int>() != n.child + 1) {
                throw std::invalid_argument("tree children must be stored side by side");
            }
        } else {
            if (e.size() != static_cast<std::size_t>(class_count) + 1) {
                throw std::invalid_argument("leaf histogram has the wrong number of classes");
            }
            n.child = static_cast<int>(leaves.size() / static_cast<std::size_t>(class_count));
            for (std::size_t c = 1; c < e.size(); ++c) leaves.push_back(e[c].get<int>());
        }
        nodes.push_back(n);
    }
    return DecisionTree(std::move(nodes), std::move(leaves), class_count);
}

} // namespace

nlohmann::json model_to_json(const OutcomeModel& model) {
    const auto& f = model.forest;
    nlohmann::json labels = nlohmann::json::array();
    for (int c = 0; c < f.class_count(); ++c) {
        labels.push_back(model.kind == OutcomeKind::Rating ? c + 1 : c);
    }
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : f.trees()) trees.push_back(tree_to_json(t));
    return {
        {"format", kModelFormat},
        {"version", kModelVersion},
        {"target", model.kind == OutcomeKind::Rating ? "rating" : "block"},
        {"class_labels", labels},
        {"feature_count", f.feature_count()},
        {"scaling", model.scaling},
        {"params",
         {{"n_trees", f.params().n_trees},
          {"max_depth", f.params().tree.max_depth},
          {"min_leaf", f.params().tree.min_leaf},
          {"features_per_split", f.params().tree.features_per_split},
          {"bootstrap", f.params().bootstrap}}},
        {"training_seed", f.training_seed()},
        {"trees", trees},
    };
}

OutcomeModel model_from_json(const nlohmann::json& j) {
    if (j.value("format", std::string()) != kModelFormat) {
        throw std::invalid_argument("not a matchlab forest model");
    }
    const int version = j.at("version").get<int>();
    if (version != kModelVersion) {
        throw std::invalid_argument("unsupported model version " + std::to_string(version));
    }
    OutcomeModel m;
    const auto target = j.at("target").get<std::string>();
    if (target == "rating") {
        m.kind = OutcomeKind::Rating;
    } else if (target == "block") {
        m.kind = OutcomeKind::Block;
    } else {
        throw std::invalid_argument("unknown model target '" + target + "'");
    }
    const int classes = static_cast<int>(j.at("class_labels").size());
    if (classes != (m.kind == OutcomeKind::Rating ? 5 : 2)) {
        throw std::invalid_argument("class label count does not match target");
    }
    m.scaling = j.at("scaling").get<FeatureScaling>();
    ForestParams p;
    const auto& jp = j.at("params");
    p.n_trees = jp.at("n_trees").get<int>();
    p.tree.max_depth = jp.at("max_depth").get<int>();
    p.tree.min_leaf = jp.at("min_leaf").get<int>();
    p.tree.features_per_split = jp.at("features_per_split").get<int>();
    p.bootstrap = jp.at("bootstrap").get<bool>();
    std::vector<DecisionTree> trees;
    for (const auto& t : j.at("trees")) trees.push_back(tree_from_json(t, classes));
    m.forest = ForestModel(std::move(trees), p, j.at("training_seed").get<std::uint64_t>(),
                           j.at("feature_count").get<std::size_t>(), classes);
    return m;
}

void save_model(const OutcomeModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file " + path);
    out << model_to_json(model).dump() << '\n';
    if (!out) throw std::runtime_error("failed writing model file " + path);
}

OutcomeModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("model file " + path + " is not valid JSON: " + e.what());
    }
    return model_from_json(j);
}

nlohmann::json eval_to_json(const EvalReport& report) {
    return {{"accuracy", report.accuracy},
            {"macro_f1", report.macro_f1},
            {"samples", report.samples},
            {"confusion", report.confusion}};
}

} // namespace matchlab
