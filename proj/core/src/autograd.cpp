#include "motiondiff/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <stdexcept>

#include "motiondiff/error.hpp"

namespace motiondiff {

std::size_t ParameterSet::add(std::string name, Matrix init) {
    params_.push_back(Parameter{std::move(name), std::move(init), Matrix()});
    return params_.size() - 1;
}

void ParameterSet::zero_grad() {
    for (auto& p : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
}

double ParameterSet::grad_norm() const {
    double s = 0.0;
    for (const auto& p : params_) {
        if (p.grad.size() != 0) s += p.grad.squaredNorm();
    }
    return std::sqrt(s);
}

void ParameterSet::scale_grad(double factor) {
    for (auto& p : params_) {
        if (p.grad.size() != 0) p.grad *= factor;
    }
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
    if (other.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
        const auto& a = params_[i];
        const auto& b = other.params_[i];
        if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols()) {
            return false;
        }
    }
    return true;
}

void ParameterSet::assign_values(const ParameterSet& other) {
    if (!same_layout(other)) throw std::invalid_argument("ParameterSet::assign_values: layout mismatch");
    for (std::size_t i = 0; i < size(); ++i) params_[i].value = other.params_[i].value;
}

std::uint64_t ParameterSet::fingerprint() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& p : params_) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(p.value.data());
        const std::size_t n = static_cast<std::size_t>(p.value.size()) * sizeof(double);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    }
    return h;
}

Var Tape::constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::constant_ref(const Matrix& value) {
    Node n;
    n.external = &value;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::leaf(Matrix value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = tracking_;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
    Node n;
    n.external = &p.value;
    if (tracking_) {
        n.param = &p;
        n.requires_grad = true;
    }
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    if (tracking_) {
        for (Var in : inputs) {
            if (nodes_[in.id].requires_grad) {
                n.requires_grad = true;
                break;
            }
        }
        if (n.requires_grad) n.backward = std::move(fn);
    }
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

const Matrix& Tape::value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.external ? *n.external : n.value;
}

const Matrix& Tape::grad(Var v) const { return nodes_[v.id].grad; }

void Tape::backward(Var scalar_output) {
    Node& out = nodes_[scalar_output.id];
    if (value(scalar_output).size() != 1) throw std::invalid_argument("Tape::backward: output must be 1x1");
    if (!out.requires_grad) return;
    out.grad = Matrix::Ones(1, 1);
    for (std::size_t i = scalar_output.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || n.grad.size() == 0) continue;
        if (n.backward) {
            // Callbacks only write to nodes with smaller ids.
            n.backward(*this, n.grad);
        }
        if (n.param != nullptr) {
            Parameter& p = *n.param;
            if (p.grad.size() == 0) {
                p.grad = n.grad;
            } else {
                p.grad += n.grad;
            }
        }
    }
}

int conv_out_frames(int frames, int kernel, int stride, int pad) {
    return (frames + 2 * pad - kernel) / stride + 1;
}

namespace ag {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()) + ")");
    }
}

int batch_of(const Matrix& x, int frames, const char* op) {
    if (frames <= 0 || x.rows() % frames != 0) {
        throw std::invalid_argument(std::string(op) + ": row count is not a multiple of frames");
    }
    return static_cast<int>(x.rows() / frames);
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    if (av.cols() != bv.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
    Matrix out(av.rows(), bv.cols());
    out.noalias() = av * bv;
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        if (tp.requires_grad(a)) {
            Matrix ga(g.rows(), tp.value(b).rows());
            ga.noalias() = g * tp.value(b).transpose();
            tp.accumulate(a, ga);
        }
        if (tp.requires_grad(b)) {
            Matrix gb(tp.value(a).cols(), g.cols());
            gb.noalias() = tp.value(a).transpose() * g;
            tp.accumulate(b, gb);
        }
    });
}

Var add(Tape& t, Var a, Var b) {
    require_same_shape(t.value(a), t.value(b), "add");
    return t.record(t.value(a) + t.value(b), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g);
        tp.accumulate(b, g);
    });
}

Var sub(Tape& t, Var a, Var b) {
    require_same_shape(t.value(a), t.value(b), "sub");
    return t.record(t.value(a) - t.value(b), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g);
        tp.accumulate(b, -g);
    });
}

Var mul(Tape& t, Var a, Var b) {
    require_same_shape(t.value(a), t.value(b), "mul");
    return t.record(t.value(a).cwiseProduct(t.value(b)), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseProduct(tp.value(b)));
        if (tp.requires_grad(b)) tp.accumulate(b, g.cwiseProduct(tp.value(a)));
    });
}

Var scale(Tape& t, Var a, double factor) {
    return t.record(t.value(a) * factor, {a}, [a, factor](Tape& tp, const Matrix& g) { tp.accumulate(a, g * factor); });
}

Var add_bias(Tape& t, Var a, Var bias) {
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(bias);
    if (bv.rows() != 1 || bv.cols() != av.cols()) throw std::invalid_argument("add_bias: bias must be 1 x cols");
    Matrix out = av.rowwise() + bv.row(0);
    return t.record(std::move(out), {a, bias}, [a, bias](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g);
        if (tp.requires_grad(bias)) tp.accumulate(bias, g.colwise().sum());
    });
}

Var add_per_clip(Tape& t, Var x, Var per_clip, int frames) {
    const Matrix& xv = t.value(x);
    const Matrix& cv = t.value(per_clip);
    const int batch = batch_of(xv, frames, "add_per_clip");
    if (cv.rows() != batch || cv.cols() != xv.cols()) throw std::invalid_argument("add_per_clip: shape mismatch");
    Matrix out = xv;
    for (int b = 0; b < batch; ++b) out.middleRows(static_cast<Eigen::Index>(b) * frames, frames).rowwise() += cv.row(b);
    return t.record(std::move(out), {x, per_clip}, [x, per_clip, frames, batch](Tape& tp, const Matrix& g) {
        tp.accumulate(x, g);
        if (tp.requires_grad(per_clip)) {
            Matrix gc(batch, g.cols());
            for (int b = 0; b < batch; ++b) {
                gc.row(b) = g.middleRows(static_cast<Eigen::Index>(b) * frames, frames).colwise().sum();
            }
            tp.accumulate(per_clip, gc);
        }
    });
}

Var scale_rows(Tape& t, Var a, std::span<const double> factors) {
    const Matrix& av = t.value(a);
    if (static_cast<Eigen::Index>(factors.size()) != av.rows()) throw std::invalid_argument("scale_rows: factor count");
    Eigen::Map<const Vector> f(factors.data(), static_cast<Eigen::Index>(factors.size()));
    Vector fv = f;
    Matrix out = fv.asDiagonal() * av;
    return t.record(std::move(out), {a}, [a, fv = std::move(fv)](Tape& tp, const Matrix& g) {
        tp.accumulate(a, fv.asDiagonal() * g);
    });
}

Var silu(Tape& t, Var a) {
    const Matrix& av = t.value(a);
    Matrix s = (1.0 / (1.0 + (-av.array()).exp())).matrix();
    Matrix out = av.cwiseProduct(s);
    return t.record(std::move(out), {a}, [a, s = std::move(s)](Tape& tp, const Matrix& g) {
        const auto& x = tp.value(a).array();
        tp.accumulate(a, (g.array() * (s.array() * (1.0 + x * (1.0 - s.array())))).matrix());
    });
}

Var relu(Tape& t, Var a) {
    Matrix out = t.value(a).cwiseMax(0.0);
    return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
        tp.accumulate(a, (tp.value(a).array() > 0.0).select(g, 0.0));
    });
}

Var leaky_relu(Tape& t, Var a, double slope) {
    const Matrix& av = t.value(a);
    Matrix out = (av.array() > 0.0).select(av, av * slope);
    return t.record(std::move(out), {a}, [a, slope](Tape& tp, const Matrix& g) {
        tp.accumulate(a, (tp.value(a).array() > 0.0).select(g, g * slope));
    });
}

Var sigmoid(Tape& t, Var a) {
    Matrix out = (1.0 / (1.0 + (-t.value(a).array()).exp())).matrix();
    const std::size_t self = t.size();
    return t.record(std::move(out), {a}, [a, self](Tape& tp, const Matrix& g) {
        const auto& s = tp.value(Var{self}).array();
        tp.accumulate(a, (g.array() * s * (1.0 - s)).matrix());
    });
}

Var concat_cols(Tape& t, Var a, Var b) { return concat_cols(t, {a, b}); }

Var concat_cols(Tape& t, std::initializer_list<Var> parts) {
    std::vector<Var> vars(parts);
    const Eigen::Index rows = t.value(vars.front()).rows();
    Eigen::Index cols = 0;
    for (Var v : vars) {
        if (t.value(v).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += t.value(v).cols();
    }
    Matrix out(rows, cols);
    std::vector<Eigen::Index> offsets;
    Eigen::Index off = 0;
    for (Var v : vars) {
        offsets.push_back(off);
        out.middleCols(off, t.value(v).cols()) = t.value(v);
        off += t.value(v).cols();
    }
    Tape::BackwardFn fn = [vars, offsets](Tape& tp, const Matrix& g) {
        for (std::size_t i = 0; i < vars.size(); ++i) {
            if (tp.requires_grad(vars[i])) tp.accumulate(vars[i], g.middleCols(offsets[i], tp.value(vars[i]).cols()));
        }
    };
    return t.record(std::move(out), parts, std::move(fn));
}

Var im2col(Tape& t, Var x, int frames, int kernel, int stride, int pad) {
    const Matrix& xv = t.value(x);
    const int batch = batch_of(xv, frames, "im2col");
    const int out_frames = conv_out_frames(frames, kernel, stride, pad);
    if (out_frames <= 0) throw std::invalid_argument("im2col: kernel larger than padded input");
    const Eigen::Index c = xv.cols();
    Matrix cols = Matrix::Zero(static_cast<Eigen::Index>(batch) * out_frames, kernel * c);
    for (int b = 0; b < batch; ++b) {
        for (int o = 0; o < out_frames; ++o) {
            const Eigen::Index row = static_cast<Eigen::Index>(b) * out_frames + o;
            for (int j = 0; j < kernel; ++j) {
                const int src = o * stride + j - pad;
                if (src < 0 || src >= frames) continue;
                cols.row(row).segment(j * c, c) = xv.row(static_cast<Eigen::Index>(b) * frames + src);
            }
        }
    }
    return t.record(std::move(cols), {x}, [=](Tape& tp, const Matrix& g) {
        Matrix gx = Matrix::Zero(static_cast<Eigen::Index>(batch) * frames, c);
        for (int b = 0; b < batch; ++b) {
            for (int o = 0; o < out_frames; ++o) {
                const Eigen::Index row = static_cast<Eigen::Index>(b) * out_frames + o;
                for (int j = 0; j < kernel; ++j) {
                    const int src = o * stride + j - pad;
                    if (src < 0 || src >= frames) continue;
                    gx.row(static_cast<Eigen::Index>(b) * frames + src) += g.row(row).segment(j * c, c);
                }
            }
        }
        tp.accumulate(x, gx);
    });
}

Var upsample2(Tape& t, Var x, int frames) {
    const Matrix& xv = t.value(x);
    const int batch = batch_of(xv, frames, "upsample2");
    Matrix out(xv.rows() * 2, xv.cols());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
        out.row(2 * r) = xv.row(r);
        out.row(2 * r + 1) = xv.row(r);
    }
    (void)batch;
    return t.record(std::move(out), {x}, [x](Tape& tp, const Matrix& g) {
        Matrix gx(g.rows() / 2, g.cols());
        for (Eigen::Index r = 0; r < gx.rows(); ++r) gx.row(r) = g.row(2 * r) + g.row(2 * r + 1);
        tp.accumulate(x, gx);
    });
}

Var clip_mean(Tape& t, Var x, int frames) {
    const Matrix& xv = t.value(x);
    const int batch = batch_of(xv, frames, "clip_mean");
    Matrix out(batch, xv.cols());
    for (int b = 0; b < batch; ++b) {
        out.row(b) = xv.middleRows(static_cast<Eigen::Index>(b) * frames, frames).colwise().mean();
    }
    return t.record(std::move(out), {x}, [x, frames, batch](Tape& tp, const Matrix& g) {
        Matrix gx(static_cast<Eigen::Index>(batch) * frames, g.cols());
        for (int b = 0; b < batch; ++b) {
            gx.middleRows(static_cast<Eigen::Index>(b) * frames, frames).rowwise() = g.row(b) / frames;
        }
        tp.accumulate(x, gx);
    });
}

Var attention(Tape& t, Var q, Var k, Var v, int frames) {
    const Matrix& qv = t.value(q);
    const Matrix& kv = t.value(k);
    const Matrix& vv = t.value(v);
    require_same_shape(qv, kv, "attention");
    if (vv.rows() != qv.rows()) throw std::invalid_argument("attention: value rows");
    const int batch = batch_of(qv, frames, "attention");
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(qv.cols()));
    auto probs = std::make_shared<std::vector<Matrix>>(batch);
    Matrix out(qv.rows(), vv.cols());
    for (int b = 0; b < batch; ++b) {
        const Eigen::Index r0 = static_cast<Eigen::Index>(b) * frames;
        Matrix s = (qv.middleRows(r0, frames) * kv.middleRows(r0, frames).transpose()) * inv_sqrt_d;
        for (Eigen::Index i = 0; i < s.rows(); ++i) {
            const double m = s.row(i).maxCoeff();
            s.row(i) = (s.row(i).array() - m).exp();
            s.row(i) /= s.row(i).sum();
        }
        out.middleRows(r0, frames).noalias() = s * vv.middleRows(r0, frames);
        (*probs)[b] = std::move(s);
    }
    return t.record(std::move(out), {q, k, v}, [=](Tape& tp, const Matrix& g) {
        const Matrix& qv2 = tp.value(q);
        const Matrix& kv2 = tp.value(k);
        const Matrix& vv2 = tp.value(v);
        Matrix gq = Matrix::Zero(qv2.rows(), qv2.cols());
        Matrix gk = Matrix::Zero(kv2.rows(), kv2.cols());
        Matrix gv = Matrix::Zero(vv2.rows(), vv2.cols());
        for (int b = 0; b < batch; ++b) {
            const Eigen::Index r0 = static_cast<Eigen::Index>(b) * frames;
            const Matrix& p = (*probs)[b];
            const auto go = g.middleRows(r0, frames);
            gv.middleRows(r0, frames).noalias() = p.transpose() * go;
            Matrix gp = go * vv2.middleRows(r0, frames).transpose();
            Vector row_dot = (gp.cwiseProduct(p)).rowwise().sum();
            Matrix gs = p.cwiseProduct(gp.colwise() - row_dot) * inv_sqrt_d;
            gq.middleRows(r0, frames).noalias() = gs * kv2.middleRows(r0, frames);
            gk.middleRows(r0, frames).noalias() = gs.transpose() * qv2.middleRows(r0, frames);
        }
        tp.accumulate(q, gq);
        tp.accumulate(k, gk);
        tp.accumulate(v, gv);
    });
}

Var temporal_difference(Tape& t, Var x, int frames, int order) {
    const Matrix& xv = t.value(x);
    const int batch = batch_of(xv, frames, "temporal_difference");
    if (order < 1 || order >= frames) throw std::invalid_argument("temporal_difference: need frames > order");
    // Binomial stencil: sum_i (-1)^(order-i) C(order, i) x[k+i].
    std::vector<double> coef(static_cast<std::size_t>(order) + 1);
    double c = 1.0;
    for (int i = 0; i <= order; ++i) {
        coef[static_cast<std::size_t>(i)] = ((order - i) % 2 == 0 ? 1.0 : -1.0) * c;
        c = c * (order - i) / (i + 1);
    }
    const int out_frames = frames - order;
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(batch) * out_frames, xv.cols());
    for (int b = 0; b < batch; ++b) {
        for (int k = 0; k < out_frames; ++k) {
            auto row = out.row(static_cast<Eigen::Index>(b) * out_frames + k);
            for (int i = 0; i <= order; ++i) row += coef[static_cast<std::size_t>(i)] * xv.row(static_cast<Eigen::Index>(b) * frames + k + i);
        }
    }
    return t.record(std::move(out), {x}, [=](Tape& tp, const Matrix& g) {
        Matrix gx = Matrix::Zero(static_cast<Eigen::Index>(batch) * frames, g.cols());
        for (int b = 0; b < batch; ++b) {
            for (int k = 0; k < out_frames; ++k) {
                const auto grow = g.row(static_cast<Eigen::Index>(b) * out_frames + k);
                for (int i = 0; i <= order; ++i) gx.row(static_cast<Eigen::Index>(b) * frames + k + i) += coef[static_cast<std::size_t>(i)] * grow;
            }
        }
        tp.accumulate(x, gx);
    });
}

Var sum(Tape& t, Var a) {
    Matrix out(1, 1);
    out(0, 0) = t.value(a).sum();
    return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
        const Matrix& av = tp.value(a);
        tp.accumulate(a, Matrix::Constant(av.rows(), av.cols(), g(0, 0)));
    });
}

Var sum_squares(Tape& t, Var a) {
    Matrix out(1, 1);
    out(0, 0) = t.value(a).squaredNorm();
    return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) { tp.accumulate(a, tp.value(a) * (2.0 * g(0, 0))); });
}

Var mean_squared_error(Tape& t, Var a, Var b) {
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    require_same_shape(av, bv, "mean_squared_error");
    // An empty block (a skeleton without feet) contributes zero.
    const double n = std::max<double>(1.0, static_cast<double>(av.size()));
    Matrix out(1, 1);
    out(0, 0) = av.size() == 0 ? 0.0 : (av - bv).squaredNorm() / n;
    return t.record(std::move(out), {a, b}, [a, b, n](Tape& tp, const Matrix& g) {
        if (tp.value(a).size() == 0) return;
        Matrix d = (tp.value(a) - tp.value(b)) * (2.0 * g(0, 0) / n);
        if (tp.requires_grad(b)) tp.accumulate(b, -d);
        tp.accumulate(a, d);
    });
}

Var softmax_cross_entropy(Tape& t, Var logits, std::span<const int> labels) {
    const Matrix& lv = t.value(logits);
    if (static_cast<Eigen::Index>(labels.size()) != lv.rows()) throw std::invalid_argument("softmax_cross_entropy: label count");
    Matrix p(lv.rows(), lv.cols());
    double loss = 0.0;
    std::vector<int> lab(labels.begin(), labels.end());
    for (Eigen::Index i = 0; i < lv.rows(); ++i) {
        if (lab[i] < 0 || lab[i] >= lv.cols()) throw std::invalid_argument("softmax_cross_entropy: label out of range");
        const double m = lv.row(i).maxCoeff();
        p.row(i) = (lv.row(i).array() - m).exp();
        const double z = p.row(i).sum();
        p.row(i) /= z;
        loss -= (lv(i, lab[i]) - m) - std::log(z);
    }
    const double n = static_cast<double>(lv.rows());
    Matrix out(1, 1);
    out(0, 0) = loss / n;
    return t.record(std::move(out), {logits}, [logits, p = std::move(p), lab = std::move(lab), n](Tape& tp, const Matrix& g) {
        Matrix gl = p;
        for (Eigen::Index i = 0; i < gl.rows(); ++i) gl(i, lab[i]) -= 1.0;
        tp.accumulate(logits, gl * (g(0, 0) / n));
    });
}

}  // namespace ag
}  // namespace motiondiff
