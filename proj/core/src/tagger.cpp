#include "xlner/tagger.hpp"

#include <algorithm>
#include <cmath>

#include "xlner/rng.hpp"

namespace xlner {

void TaggerConfig::validate() const {
    if (vocab_size < 2) throw config_error("TaggerConfig: vocab_size must cover the reserved ids");
    if (embedding_dim == 0 || hidden_dim == 0)
        throw config_error("TaggerConfig: zero embedding or hidden dimension");
}

std::array<Tensor*, TaggerParams::num_blocks> TaggerParams::blocks() {
    return {&embedding, &encoder_weight, &encoder_bias, &classifier_weight, &classifier_bias};
}

std::array<const Tensor*, TaggerParams::num_blocks> TaggerParams::blocks() const {
    return {&embedding, &encoder_weight, &encoder_bias, &classifier_weight, &classifier_bias};
}

TaggerConfig TaggerParams::config() const {
    TaggerConfig cfg;
    cfg.vocab_size = embedding.rows();
    cfg.embedding_dim = embedding.cols();
    cfg.hidden_dim = encoder_weight.rows();
    const std::size_t concat = encoder_weight.cols();
    if (cfg.embedding_dim == 0 || concat % cfg.embedding_dim != 0 ||
        (concat / cfg.embedding_dim) % 2 == 0)
        throw invalid_input("TaggerParams: encoder width is not an odd multiple of embedding dim");
    cfg.context_radius = (concat / cfg.embedding_dim - 1) / 2;
    if (encoder_bias.shape != std::vector<std::size_t>{cfg.hidden_dim} ||
        classifier_weight.shape != std::vector<std::size_t>{TaggerConfig::num_labels,
                                                            cfg.hidden_dim} ||
        classifier_bias.shape != std::vector<std::size_t>{TaggerConfig::num_labels})
        throw invalid_input("TaggerParams: inconsistent block shapes");
    return cfg;
}

TaggerParams TaggerParams::zeros(const TaggerConfig& cfg) {
    cfg.validate();
    TaggerParams p;
    p.embedding = Tensor::zeros({cfg.vocab_size, cfg.embedding_dim});
    p.encoder_weight = Tensor::zeros({cfg.hidden_dim, cfg.concat_dim()});
    p.encoder_bias = Tensor::zeros({cfg.hidden_dim});
    p.classifier_weight = Tensor::zeros({TaggerConfig::num_labels, cfg.hidden_dim});
    p.classifier_bias = Tensor::zeros({TaggerConfig::num_labels});
    return p;
}

void TaggerParams::fill(double value) {
    for (Tensor* t : blocks()) t->fill(value);
}

namespace {

void xavier_fill(Tensor& t, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
    for (double& x : t.data) x = rng.uniform(-limit, limit);
}

} // namespace

TaggerParams init_params(const TaggerConfig& cfg, std::uint64_t seed) {
    TaggerParams p = TaggerParams::zeros(cfg);
    Rng rng(seed);
    xavier_fill(p.embedding, rng);
    xavier_fill(p.encoder_weight, rng);
    xavier_fill(p.classifier_weight, rng);
    return p;
}

void forward(const TaggerParams& params, std::span<const int> ids, ForwardCache& cache) {
    const TaggerConfig cfg = params.config();
    const std::size_t len = ids.size();
    if (len == 0) throw invalid_input("forward: empty sentence");
    for (int id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
            throw invalid_input("forward: token id outside vocabulary");

    const std::size_t width = cfg.window_width();
    const std::size_t m = cfg.embedding_dim;
    const std::size_t hid = cfg.hidden_dim;
    const std::size_t concat = cfg.concat_dim();
    const auto radius = static_cast<std::ptrdiff_t>(cfg.context_radius);

    cache.window_ids.assign(len * width, Vocab::kBoundaryId);
    cache.concat = Tensor::zeros({len, concat});
    cache.hidden = Tensor::zeros({len, hid});
    cache.probs = Tensor::zeros({len, TaggerConfig::num_labels});

    for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t w = 0; w < width; ++w) {
            const std::ptrdiff_t j =
                static_cast<std::ptrdiff_t>(i) - radius + static_cast<std::ptrdiff_t>(w);
            const int id = (j < 0 || j >= static_cast<std::ptrdiff_t>(len))
                               ? Vocab::kBoundaryId
                               : ids[static_cast<std::size_t>(j)];
            cache.window_ids[i * width + w] = id;
            const double* row = &params.embedding.data[static_cast<std::size_t>(id) * m];
            double* dst = &cache.concat.data[i * concat + w * m];
            for (std::size_t d = 0; d < m; ++d) dst[d] = row[d];
        }
        for (std::size_t h = 0; h < hid; ++h) {
            double acc = params.encoder_bias.data[h];
            const double* wrow = &params.encoder_weight.data[h * concat];
            const double* in = &cache.concat.data[i * concat];
            for (std::size_t d = 0; d < concat; ++d) acc += wrow[d] * in[d];
            cache.hidden.data[i * hid + h] = std::tanh(acc);
        }
        double* logits = &cache.probs.data[i * TaggerConfig::num_labels];
        for (std::size_t c = 0; c < TaggerConfig::num_labels; ++c) {
            double acc = params.classifier_bias.data[c];
            const double* wrow = &params.classifier_weight.data[c * hid];
            const double* in = &cache.hidden.data[i * hid];
            for (std::size_t h = 0; h < hid; ++h) acc += wrow[h] * in[h];
            logits[c] = acc;
        }
        softmax_inplace({logits, TaggerConfig::num_labels});
    }
}

Tensor encode(const TaggerParams& params, std::span<const int> ids) {
    ForwardCache cache;
    forward(params, ids, cache);
    return std::move(cache.hidden);
}

std::vector<ProbDist> predict_dist(const TaggerParams& params, std::span<const int> ids) {
    ForwardCache cache;
    forward(params, ids, cache);
    std::vector<ProbDist> out;
    out.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const double* row = &cache.probs.data[i * TaggerConfig::num_labels];
        out.emplace_back(std::vector<double>(row, row + TaggerConfig::num_labels));
    }
    return out;
}

std::vector<Tag> predict_labels(const TaggerParams& params, std::span<const int> ids) {
    ForwardCache cache;
    forward(params, ids, cache);
    std::vector<Tag> out;
    out.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const double* row = &cache.probs.data[i * TaggerConfig::num_labels];
        out.push_back(static_cast<Tag>(argmax({row, TaggerConfig::num_labels})));
    }
    return out;
}

void backward_from_dlogits(const TaggerParams& params, const ForwardCache& cache,
                           const Tensor& dlogits, TaggerParams& grads) {
    const TaggerConfig cfg = params.config();
    const std::size_t len = cache.hidden.rows();
    const std::size_t hid = cfg.hidden_dim;
    const std::size_t concat = cfg.concat_dim();
    const std::size_t width = cfg.window_width();
    const std::size_t m = cfg.embedding_dim;
    if (dlogits.shape != std::vector<std::size_t>{len, TaggerConfig::num_labels})
        throw invalid_input("backward_from_dlogits: dlogits shape mismatch");

    std::vector<double> dpre(hid);
    for (std::size_t i = 0; i < len; ++i) {
        const double* dl = &dlogits.data[i * TaggerConfig::num_labels];
        const double* h = &cache.hidden.data[i * hid];

        // classifier: dW += dl h^T, db += dl, dh = W^T dl
        for (std::size_t c = 0; c < TaggerConfig::num_labels; ++c) {
            grads.classifier_bias.data[c] += dl[c];
            double* gw = &grads.classifier_weight.data[c * hid];
            for (std::size_t k = 0; k < hid; ++k) gw[k] += dl[c] * h[k];
        }
        for (std::size_t k = 0; k < hid; ++k) {
            double acc = 0.0;
            for (std::size_t c = 0; c < TaggerConfig::num_labels; ++c)
                acc += params.classifier_weight.data[c * hid + k] * dl[c];
            dpre[k] = acc * (1.0 - h[k] * h[k]); // through tanh
        }

        // encoder: dW1 += dpre concat^T, db1 += dpre, dconcat = W1^T dpre
        const double* in = &cache.concat.data[i * concat];
        for (std::size_t k = 0; k < hid; ++k) {
            grads.encoder_bias.data[k] += dpre[k];
            double* gw = &grads.encoder_weight.data[k * concat];
            for (std::size_t d = 0; d < concat; ++d) gw[d] += dpre[k] * in[d];
        }
        for (std::size_t w = 0; w < width; ++w) {
            const auto row = static_cast<std::size_t>(cache.window_ids[i * width + w]);
            double* ge = &grads.embedding.data[row * m];
            for (std::size_t d = 0; d < m; ++d) {
                double acc = 0.0;
                for (std::size_t k = 0; k < hid; ++k)
                    acc += params.encoder_weight.data[k * concat + w * m + d] * dpre[k];
                ge[d] += acc;
            }
        }
    }
}

double supervised_loss_and_grad(const TaggerParams& params, std::span<const int> ids,
                                std::span<const Tag> gold, TaggerParams& grads) {
    if (gold.size() != ids.size())
        throw invalid_input("supervised_loss_and_grad: label/token length mismatch");
    ForwardCache cache;
    forward(params, ids, cache);

    const std::size_t len = ids.size();
    const double inv_len = 1.0 / static_cast<double>(len);
    double loss = 0.0;
    Tensor dlogits = Tensor::zeros({len, TaggerConfig::num_labels});
    for (std::size_t i = 0; i < len; ++i) {
        const auto y = static_cast<std::size_t>(gold[i]);
        if (y >= TaggerConfig::num_labels)
            throw invalid_input("supervised_loss_and_grad: label outside the tag set");
        const double* p = &cache.probs.data[i * TaggerConfig::num_labels];
        loss += -std::log(std::max(p[y], kNllFloor)) * inv_len;
        // d/dlogit of -log softmax_y is (p - onehot(y)); the floor above only
        // guards the loss value, the gradient keeps the softmax form.
        double* dl = &dlogits.data[i * TaggerConfig::num_labels];
        for (std::size_t c = 0; c < TaggerConfig::num_labels; ++c)
            dl[c] = (p[c] - (c == y ? 1.0 : 0.0)) * inv_len;
    }
    backward_from_dlogits(params, cache, dlogits, grads);
    return loss;
}

void collapse_unseen_rows(TaggerParams& params, const std::vector<bool>& seen) {
    const std::size_t vocab = params.embedding.rows();
    const std::size_t m = params.embedding.cols();
    if (seen.size() != vocab)
        throw invalid_input("collapse_unseen_rows: mask size must equal the vocabulary size");
    const double* unk = &params.embedding.data[Vocab::kUnknownId * m];
    for (std::size_t id = 2; id < vocab; ++id) {
        if (seen[id]) continue;
        double* row = &params.embedding.data[id * m];
        for (std::size_t d = 0; d < m; ++d) row[d] = unk[d];
    }
}

} // namespace xlner
