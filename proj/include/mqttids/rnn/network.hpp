#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mqttids/errors.hpp"

namespace mqttids::rnn {

enum class CellKind { Lstm, Gru };
enum class Mode { Train, Infer };

struct LayerSpec {
    std::size_t width = 32;
    bool batchnorm = false;
    double dropout = 0.0;  // 0 = none
};

struct NetworkSpec {
    CellKind cell = CellKind::Lstm;
    std::vector<LayerSpec> layers;
    std::size_t classes = 4;
    std::size_t batch_size = 128;
    std::size_t epochs = 15;
    double validation_split = 0.1;
    double fbeta_beta = 2.0;
    std::uint64_t seed = 0;

    void validate() const;

    // Desk-scale variants of the reference stacks (widths divided by 4).
    static NetworkSpec lstm_desk();
    static NetworkSpec gru_desk();
};

template <class Real>
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
template <class Real>
using RowVec = Eigen::Matrix<Real, 1, Eigen::Dynamic>;
template <class Real>
using Seq = std::vector<Mat<Real>>;  // one (batch x units) matrix per timestep

template <class Real>
struct ParamRef {
    std::string name;
    Mat<Real>* value;
    Mat<Real>* grad;
};

namespace detail {

template <class Real>
Mat<Real> sigmoid(const Mat<Real>& x) {
    return ((-x.array()).exp() + Real(1)).inverse().matrix();
}

template <class Real>
Mat<Real> glorot_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    Real limit = std::sqrt(Real(6) / Real(rows + cols));
    Mat<Real> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        Real u = Real(static_cast<double>(rng() >> 11) * 0x1.0p-53);
        m.data()[i] = (u * Real(2) - Real(1)) * limit;
    }
    return m;
}

template <class Real>
Mat<Real> orthogonal(std::size_t n, std::mt19937_64& rng) {
    Mat<Real> a(n, n);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        double u1 = std::max(static_cast<double>(rng() >> 11) * 0x1.0p-53, 1e-12);
        double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        a.data()[i] = Real(std::sqrt(-2.0 * std::log(u1)) *
                           std::cos(2.0 * 3.14159265358979323846 * u2));
    }
    Eigen::HouseholderQR<Mat<Real>> qr(a);
    Mat<Real> q = qr.householderQ() * Mat<Real>::Identity(n, n);
    // fix signs so the decomposition is unique
    Mat<Real> r = qr.matrixQR().template triangularView<Eigen::Upper>();
    for (std::size_t c = 0; c < n; ++c)
        if (r(c, c) < Real(0)) q.col(c) = -q.col(c);
    return q;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// LSTM layer: i = s(xWi + hUi + bi), f, o likewise, g = tanh(xWg + hUg + bg);
// c = f*c_prev + i*g; h = o*tanh(c).
template <class Real>
class LstmLayer {
public:
    LstmLayer(std::size_t input, std::size_t hidden, std::mt19937_64& rng)
        : input_(input), hidden_(hidden) {
        auto init_gate = [&](Mat<Real>& w, Mat<Real>& u, Mat<Real>& b, Real bias_init) {
            w = detail::glorot_uniform<Real>(input, hidden, rng);
            u = detail::orthogonal<Real>(hidden, rng);
            b = Mat<Real>::Constant(1, hidden, bias_init);
        };
        init_gate(wi_, ui_, bi_, 0);
        init_gate(wf_, uf_, bf_, 1);  // forget gate opens at the start
        init_gate(wg_, ug_, bg_, 0);
        init_gate(wo_, uo_, bo_, 0);
        zero_grads();
    }

    std::size_t input_size() const { return input_; }
    std::size_t output_size() const { return hidden_; }

    // Single-step cell evaluation (shared by forward and the test oracles).
    static void step(const Mat<Real>& x, const Mat<Real>& h_prev, const Mat<Real>& c_prev,
                     const Mat<Real>& wi, const Mat<Real>& ui, const Mat<Real>& bi,
                     const Mat<Real>& wf, const Mat<Real>& uf, const Mat<Real>& bf,
                     const Mat<Real>& wg, const Mat<Real>& ug, const Mat<Real>& bg,
                     const Mat<Real>& wo, const Mat<Real>& uo, const Mat<Real>& bo,
                     Mat<Real>& i, Mat<Real>& f, Mat<Real>& g, Mat<Real>& o, Mat<Real>& c,
                     Mat<Real>& h) {
        i = detail::sigmoid<Real>(((x * wi + h_prev * ui).rowwise() + bi.row(0)).eval());
        f = detail::sigmoid<Real>(((x * wf + h_prev * uf).rowwise() + bf.row(0)).eval());
        g = ((x * wg + h_prev * ug).rowwise() + bg.row(0)).array().tanh().matrix();
        o = detail::sigmoid<Real>(((x * wo + h_prev * uo).rowwise() + bo.row(0)).eval());
        c = (f.array() * c_prev.array() + i.array() * g.array()).matrix();
        h = (o.array() * c.array().tanh()).matrix();
    }

    Seq<Real> forward(const Seq<Real>& xs, Mode) {
        std::size_t t_steps = xs.size();
        auto batch = xs.empty() ? 0 : xs[0].rows();
        xs_ = xs;
        is_.resize(t_steps);
        fs_.resize(t_steps);
        gs_.resize(t_steps);
        os_.resize(t_steps);
        cs_.resize(t_steps);
        hs_.resize(t_steps);

        Mat<Real> h = Mat<Real>::Zero(batch, hidden_);
        Mat<Real> c = Mat<Real>::Zero(batch, hidden_);
        Seq<Real> out(t_steps);
        for (std::size_t t = 0; t < t_steps; ++t) {
            if (xs[t].cols() != static_cast<Eigen::Index>(input_))
                throw ShapeMismatch("LSTM input width mismatch");
            Mat<Real> h_next, c_next;
            step(xs[t], h, c, wi_, ui_, bi_, wf_, uf_, bf_, wg_, ug_, bg_, wo_, uo_, bo_,
                 is_[t], fs_[t], gs_[t], os_[t], c_next, h_next);
            cs_[t] = c_next;
            hs_[t] = h_next;
            h = h_next;
            c = c_next;
            out[t] = h;
        }
        return out;
    }

    Seq<Real> backward(const Seq<Real>& dh_out) {
        std::size_t t_steps = dh_out.size();
        auto batch = dh_out.empty() ? 0 : dh_out[0].rows();
        Seq<Real> dxs(t_steps);
        Mat<Real> dh_next = Mat<Real>::Zero(batch, hidden_);
        Mat<Real> dc_next = Mat<Real>::Zero(batch, hidden_);

        for (std::size_t ti = t_steps; ti-- > 0;) {
            Mat<Real> dh = dh_out[ti] + dh_next;
            const Mat<Real>& c = cs_[ti];
            Mat<Real> tanh_c = c.array().tanh().matrix();
            Mat<Real> dc =
                dc_next +
                (dh.array() * os_[ti].array() * (1 - tanh_c.array().square())).matrix();
            Mat<Real> d_o = (dh.array() * tanh_c.array()).matrix();
            Mat<Real> di = (dc.array() * gs_[ti].array()).matrix();
            Mat<Real> dg = (dc.array() * is_[ti].array()).matrix();
            Mat<Real> c_prev = ti == 0 ? Mat<Real>::Zero(batch, hidden_).eval() : cs_[ti - 1];
            Mat<Real> df = (dc.array() * c_prev.array()).matrix();
            dc_next = (dc.array() * fs_[ti].array()).matrix();

            Mat<Real> dai = (di.array() * is_[ti].array() * (1 - is_[ti].array())).matrix();
            Mat<Real> daf = (df.array() * fs_[ti].array() * (1 - fs_[ti].array())).matrix();
            Mat<Real> dao = (d_o.array() * os_[ti].array() * (1 - os_[ti].array())).matrix();
            Mat<Real> dag = (dg.array() * (1 - gs_[ti].array().square())).matrix();

            Mat<Real> h_prev = ti == 0 ? Mat<Real>::Zero(batch, hidden_).eval() : hs_[ti - 1];
            gwi_ += xs_[ti].transpose() * dai;
            gwf_ += xs_[ti].transpose() * daf;
            gwg_ += xs_[ti].transpose() * dag;
            gwo_ += xs_[ti].transpose() * dao;
            gui_ += h_prev.transpose() * dai;
            guf_ += h_prev.transpose() * daf;
            gug_ += h_prev.transpose() * dag;
            guo_ += h_prev.transpose() * dao;
            gbi_ += dai.colwise().sum();
            gbf_ += daf.colwise().sum();
            gbg_ += dag.colwise().sum();
            gbo_ += dao.colwise().sum();

            dxs[ti] = dai * wi_.transpose() + daf * wf_.transpose() +
                      dag * wg_.transpose() + dao * wo_.transpose();
            dh_next = dai * ui_.transpose() + daf * uf_.transpose() +
                      dag * ug_.transpose() + dao * uo_.transpose();
        }
        return dxs;
    }

    void zero_grads() {
        for (auto& p : params())
            *p.grad = Mat<Real>::Zero(p.value->rows(), p.value->cols());
    }

    std::vector<ParamRef<Real>> params() {
        return {{"wi", &wi_, &gwi_}, {"ui", &ui_, &gui_}, {"bi", &bi_, &gbi_},
                {"wf", &wf_, &gwf_}, {"uf", &uf_, &guf_}, {"bf", &bf_, &gbf_},
                {"wg", &wg_, &gwg_}, {"ug", &ug_, &gug_}, {"bg", &bg_, &gbg_},
                {"wo", &wo_, &gwo_}, {"uo", &uo_, &guo_}, {"bo", &bo_, &gbo_}};
    }

private:
    std::size_t input_, hidden_;
    Mat<Real> wi_, ui_, bi_, wf_, uf_, bf_, wg_, ug_, bg_, wo_, uo_, bo_;
    Mat<Real> gwi_, gui_, gbi_, gwf_, guf_, gbf_, gwg_, gug_, gbg_, gwo_, guo_, gbo_;
    Seq<Real> xs_, is_, fs_, gs_, os_, cs_, hs_;
};

// ---------------------------------------------------------------------------
// GRU layer: z = s(xWz + hUz + bz), r = s(xWr + hUr + br),
// htilde = tanh(xWh + (r*h)Uh + bh); h = (1 - z)*h_prev + z*htilde.
template <class Real>
class GruLayer {
public:
    GruLayer(std::size_t input, std::size_t hidden, std::mt19937_64& rng)
        : input_(input), hidden_(hidden) {
        auto init_gate = [&](Mat<Real>& w, Mat<Real>& u, Mat<Real>& b) {
            w = detail::glorot_uniform<Real>(input, hidden, rng);
            u = detail::orthogonal<Real>(hidden, rng);
            b = Mat<Real>::Zero(1, hidden);
        };
        init_gate(wz_, uz_, bz_);
        init_gate(wr_, ur_, br_);
        init_gate(wh_, uh_, bh_);
        zero_grads();
    }

    std::size_t input_size() const { return input_; }
    std::size_t output_size() const { return hidden_; }

    static void step(const Mat<Real>& x, const Mat<Real>& h_prev, const Mat<Real>& wz,
                     const Mat<Real>& uz, const Mat<Real>& bz, const Mat<Real>& wr,
                     const Mat<Real>& ur, const Mat<Real>& br, const Mat<Real>& wh,
                     const Mat<Real>& uh, const Mat<Real>& bh, Mat<Real>& z, Mat<Real>& r,
                     Mat<Real>& htilde, Mat<Real>& h) {
        z = detail::sigmoid<Real>(((x * wz + h_prev * uz).rowwise() + bz.row(0)).eval());
        r = detail::sigmoid<Real>(((x * wr + h_prev * ur).rowwise() + br.row(0)).eval());
        Mat<Real> rh = (r.array() * h_prev.array()).matrix();
        htilde = ((x * wh + rh * uh).rowwise() + bh.row(0)).array().tanh().matrix();
        h = ((1 - z.array()) * h_prev.array() + z.array() * htilde.array()).matrix();
    }

    Seq<Real> forward(const Seq<Real>& xs, Mode) {
        std::size_t t_steps = xs.size();
        auto batch = xs.empty() ? 0 : xs[0].rows();
        xs_ = xs;
        zs_.resize(t_steps);
        rs_.resize(t_steps);
        hts_.resize(t_steps);
        hs_.resize(t_steps);

        Mat<Real> h = Mat<Real>::Zero(batch, hidden_);
        Seq<Real> out(t_steps);
        for (std::size_t t = 0; t < t_steps; ++t) {
            if (xs[t].cols() != static_cast<Eigen::Index>(input_))
                throw ShapeMismatch("GRU input width mismatch");
            Mat<Real> h_next;
            step(xs[t], h, wz_, uz_, bz_, wr_, ur_, br_, wh_, uh_, bh_, zs_[t], rs_[t],
                 hts_[t], h_next);
            hs_[t] = h_next;
            h = h_next;
            out[t] = h;
        }
        return out;
    }

    Seq<Real> backward(const Seq<Real>& dh_out) {
        std::size_t t_steps = dh_out.size();
        auto batch = dh_out.empty() ? 0 : dh_out[0].rows();
        Seq<Real> dxs(t_steps);
        Mat<Real> dh_next = Mat<Real>::Zero(batch, hidden_);

        for (std::size_t ti = t_steps; ti-- > 0;) {
            Mat<Real> dh = dh_out[ti] + dh_next;
            Mat<Real> h_prev = ti == 0 ? Mat<Real>::Zero(batch, hidden_).eval() : hs_[ti - 1];
            const Mat<Real>& z = zs_[ti];
            const Mat<Real>& r = rs_[ti];
            const Mat<Real>& ht = hts_[ti];

            Mat<Real> dht = (dh.array() * z.array()).matrix();
            Mat<Real> dz = (dh.array() * (ht.array() - h_prev.array())).matrix();
            Mat<Real> dh_prev = (dh.array() * (1 - z.array())).matrix();

            Mat<Real> dah = (dht.array() * (1 - ht.array().square())).matrix();
            Mat<Real> drh = dah * uh_.transpose();
            Mat<Real> dr = (drh.array() * h_prev.array()).matrix();
            dh_prev += (drh.array() * r.array()).matrix();

            Mat<Real> daz = (dz.array() * z.array() * (1 - z.array())).matrix();
            Mat<Real> dar = (dr.array() * r.array() * (1 - r.array())).matrix();

            Mat<Real> rh = (r.array() * h_prev.array()).matrix();
            gwz_ += xs_[ti].transpose() * daz;
            gwr_ += xs_[ti].transpose() * dar;
            gwh_ += xs_[ti].transpose() * dah;
            guz_ += h_prev.transpose() * daz;
            gur_ += h_prev.transpose() * dar;
            guh_ += rh.transpose() * dah;
            gbz_ += daz.colwise().sum();
            gbr_ += dar.colwise().sum();
            gbh_ += dah.colwise().sum();

            dxs[ti] = daz * wz_.transpose() + dar * wr_.transpose() + dah * wh_.transpose();
            dh_next = dh_prev + daz * uz_.transpose() + dar * ur_.transpose();
        }
        return dxs;
    }

    void zero_grads() {
        for (auto& p : params())
            *p.grad = Mat<Real>::Zero(p.value->rows(), p.value->cols());
    }

    std::vector<ParamRef<Real>> params() {
        return {{"wz", &wz_, &gwz_}, {"uz", &uz_, &guz_}, {"bz", &bz_, &gbz_},
                {"wr", &wr_, &gwr_}, {"ur", &ur_, &gur_}, {"br", &br_, &gbr_},
                {"wh", &wh_, &gwh_}, {"uh", &uh_, &guh_}, {"bh", &bh_, &gbh_}};
    }

private:
    std::size_t input_, hidden_;
    Mat<Real> wz_, uz_, bz_, wr_, ur_, br_, wh_, uh_, bh_;
    Mat<Real> gwz_, guz_, gbz_, gwr_, gur_, gbr_, gwh_, guh_, gbh_;
    Seq<Real> xs_, zs_, rs_, hts_, hs_;
};

// ---------------------------------------------------------------------------
// Batch normalization over recurrent outputs: statistics are pooled across
// the batch and every timestep, one (gamma, beta) pair per unit.
template <class Real>
class BatchNormLayer {
public:
    explicit BatchNormLayer(std::size_t units)
        : units_(units),
          gamma_(Mat<Real>::Ones(1, units)),
          beta_(Mat<Real>::Zero(1, units)),
          running_mean_(Mat<Real>::Zero(1, units)),
          running_var_(Mat<Real>::Ones(1, units)) {
        zero_grads();
    }

    static constexpr double kEps = 1e-5;
    static constexpr double kMomentum = 0.99;

    std::size_t output_size() const { return units_; }

    Seq<Real> forward(const Seq<Real>& xs, Mode mode) {
        std::size_t t_steps = xs.size();
        Seq<Real> out(t_steps);
        if (mode == Mode::Infer) {
            RowVec<Real> inv_std =
                (running_var_.row(0).array() + Real(kEps)).rsqrt().matrix();
            for (std::size_t t = 0; t < t_steps; ++t) {
                Mat<Real> xhat =
                    ((xs[t].rowwise() - running_mean_.row(0)).array().rowwise() *
                     inv_std.array())
                        .matrix();
                out[t] = (xhat.array().rowwise() * gamma_.row(0).array()).matrix();
                out[t].rowwise() += beta_.row(0);
            }
            return out;
        }

        auto batch = xs.empty() ? 0 : xs[0].rows();
        Real m = Real(static_cast<double>(batch) * static_cast<double>(t_steps));
        RowVec<Real> mean = RowVec<Real>::Zero(units_);
        for (const auto& x : xs) mean += x.colwise().sum();
        mean /= m;
        RowVec<Real> var = RowVec<Real>::Zero(units_);
        for (const auto& x : xs)
            var += (x.rowwise() - mean).array().square().colwise().sum().matrix();
        var /= m;

        inv_std_ = (var.array() + Real(kEps)).rsqrt().matrix();
        xhat_.resize(t_steps);
        for (std::size_t t = 0; t < t_steps; ++t) {
            xhat_[t] = ((xs[t].rowwise() - mean).array().rowwise() * inv_std_.array())
                           .matrix();
            out[t] = (xhat_[t].array().rowwise() * gamma_.row(0).array()).matrix();
            out[t].rowwise() += beta_.row(0);
        }
        m_ = m;
        running_mean_.row(0) =
            running_mean_.row(0) * Real(kMomentum) + mean * Real(1 - kMomentum);
        running_var_.row(0) =
            running_var_.row(0) * Real(kMomentum) + var * Real(1 - kMomentum);
        return out;
    }

    Seq<Real> backward(const Seq<Real>& dys) {
        std::size_t t_steps = dys.size();
        RowVec<Real> sum_g = RowVec<Real>::Zero(units_);
        RowVec<Real> sum_gx = RowVec<Real>::Zero(units_);
        for (std::size_t t = 0; t < t_steps; ++t) {
            gbeta_.row(0) += dys[t].colwise().sum();
            ggamma_.row(0) += (dys[t].array() * xhat_[t].array()).colwise().sum().matrix();
            Mat<Real> g = (dys[t].array().rowwise() * gamma_.row(0).array()).matrix();
            sum_g += g.colwise().sum();
            sum_gx += (g.array() * xhat_[t].array()).colwise().sum().matrix();
        }
        Seq<Real> dxs(t_steps);
        for (std::size_t t = 0; t < t_steps; ++t) {
            Mat<Real> g = (dys[t].array().rowwise() * gamma_.row(0).array()).matrix();
            Mat<Real> centered =
                (g * Real(m_)).rowwise() - sum_g -
                (xhat_[t].array().rowwise() * sum_gx.array()).matrix();
            dxs[t] = (centered.array().rowwise() * inv_std_.array()).matrix() / Real(m_);
        }
        return dxs;
    }

    void zero_grads() {
        ggamma_ = Mat<Real>::Zero(1, units_);
        gbeta_ = Mat<Real>::Zero(1, units_);
    }

    std::vector<ParamRef<Real>> params() {
        return {{"gamma", &gamma_, &ggamma_}, {"beta", &beta_, &gbeta_}};
    }

    Mat<Real>& gamma() { return gamma_; }
    Mat<Real>& beta() { return beta_; }
    Mat<Real>& running_mean() { return running_mean_; }
    Mat<Real>& running_var() { return running_var_; }

private:
    std::size_t units_;
    Mat<Real> gamma_, beta_, running_mean_, running_var_;
    Mat<Real> ggamma_, gbeta_;
    Seq<Real> xhat_;
    RowVec<Real> inv_std_;
    Real m_ = 1;
};

// ---------------------------------------------------------------------------
// Inverted dropout: train zeroes units with probability `rate` and scales
// survivors by 1/(1-rate); inference is the identity.
template <class Real>
class DropoutLayer {
public:
    DropoutLayer(double rate, std::uint64_t seed) : rate_(rate), seed_(seed) {
        if (!(rate >= 0.0 && rate < 1.0)) throw Error("dropout rate must lie in [0, 1)");
    }

    Seq<Real> forward(const Seq<Real>& xs, Mode mode) {
        if (mode == Mode::Infer || rate_ == 0.0) {
            masks_.clear();
            return xs;
        }
        std::mt19937_64 rng(seed_ ^ (0x9E3779B97F4A7C15ull * ++calls_));
        Real scale = Real(1.0 / (1.0 - rate_));
        Seq<Real> out(xs.size());
        masks_.resize(xs.size());
        for (std::size_t t = 0; t < xs.size(); ++t) {
            masks_[t] = Mat<Real>::Zero(xs[t].rows(), xs[t].cols());
            for (Eigen::Index i = 0; i < masks_[t].size(); ++i) {
                double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
                masks_[t].data()[i] = u >= rate_ ? scale : Real(0);
            }
            out[t] = (xs[t].array() * masks_[t].array()).matrix();
        }
        return out;
    }

    Seq<Real> backward(const Seq<Real>& dys) {
        if (masks_.empty()) return dys;
        Seq<Real> dxs(dys.size());
        for (std::size_t t = 0; t < dys.size(); ++t)
            dxs[t] = (dys[t].array() * masks_[t].array()).matrix();
        return dxs;
    }

    double rate() const { return rate_; }

private:
    double rate_;
    std::uint64_t seed_;
    std::uint64_t calls_ = 0;
    Seq<Real> masks_;
};

// ---------------------------------------------------------------------------
// Dense softmax head over the final timestep's hidden state.
template <class Real>
class DenseSoftmax {
public:
    DenseSoftmax(std::size_t input, std::size_t classes, std::mt19937_64& rng)
        : input_(input), classes_(classes) {
        w_ = detail::glorot_uniform<Real>(input, classes, rng);
        b_ = Mat<Real>::Zero(1, classes);
        zero_grads();
    }

    std::size_t classes() const { return classes_; }

    Mat<Real> forward(const Mat<Real>& h) {
        if (h.cols() != static_cast<Eigen::Index>(input_))
            throw ShapeMismatch("dense head input width mismatch");
        h_ = h;
        Mat<Real> logits = (h * w_).rowwise() + b_.row(0);
        Mat<Real> probs(logits.rows(), logits.cols());
        for (Eigen::Index r = 0; r < logits.rows(); ++r) {
            Real m = logits.row(r).maxCoeff();
            auto e = (logits.row(r).array() - m).exp();
            probs.row(r) = (e / e.sum()).matrix();
        }
        probs_ = probs;
        return probs;
    }

    // Categorical cross entropy against one-hot targets; returns mean loss and
    // fills the gradient wrt the head input.
    double loss_and_backward(const Mat<Real>& truth_onehot, Mat<Real>& dh) {
        auto batch = probs_.rows();
        double loss = 0;
        for (Eigen::Index r = 0; r < batch; ++r)
            for (Eigen::Index c = 0; c < probs_.cols(); ++c)
                if (truth_onehot(r, c) != Real(0))
                    loss -= static_cast<double>(truth_onehot(r, c)) *
                            std::log(std::max(static_cast<double>(probs_(r, c)), 1e-15));
        loss /= static_cast<double>(batch);

        Mat<Real> dlogits = (probs_ - truth_onehot) / Real(batch);
        gw_ += h_.transpose() * dlogits;
        gb_.row(0) += dlogits.colwise().sum();
        dh = dlogits * w_.transpose();
        return loss;
    }

    void zero_grads() {
        gw_ = Mat<Real>::Zero(input_, classes_);
        gb_ = Mat<Real>::Zero(1, classes_);
    }

    std::vector<ParamRef<Real>> params() {
        return {{"w", &w_, &gw_}, {"b", &b_, &gb_}};
    }

    Mat<Real>& weight() { return w_; }
    Mat<Real>& bias() { return b_; }

private:
    std::size_t input_, classes_;
    Mat<Real> w_, b_, gw_, gb_;
    Mat<Real> h_, probs_;
};

// ---------------------------------------------------------------------------
// Nadam: Adam with Nesterov momentum folded into the parameter update.
template <class Real>
class Nadam {
public:
    explicit Nadam(double alpha = 0.002, double beta1 = 0.9, double beta2 = 0.999,
                   double eps = 1e-8)
        : alpha_(alpha), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void attach(const std::vector<ParamRef<Real>>& params) {
        m_.clear();
        v_.clear();
        for (const auto& p : params) {
            m_.push_back(Mat<Real>::Zero(p.value->rows(), p.value->cols()));
            v_.push_back(Mat<Real>::Zero(p.value->rows(), p.value->cols()));
        }
        t_ = 0;
    }

    std::uint64_t step_count() const { return t_; }

    void step(const std::vector<ParamRef<Real>>& params) {
        if (m_.size() != params.size()) throw ShapeMismatch("optimizer not attached");
        ++t_;
        double bc1_t = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        double bc1_next = 1.0 - std::pow(beta1_, static_cast<double>(t_ + 1));
        double bc2_t = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            const Mat<Real>& g = *params[i].grad;
            m_[i] = Real(beta1_) * m_[i] + Real(1 - beta1_) * g;
            v_[i] = (Real(beta2_) * v_[i].array() +
                     Real(1 - beta2_) * g.array().square())
                        .matrix();
            auto m_hat = m_[i].array() / Real(bc1_next);
            auto g_hat = g.array() / Real(bc1_t);
            auto v_hat = v_[i].array() / Real(bc2_t);
            params[i].value->array() -=
                Real(alpha_) * (Real(beta1_) * m_hat + Real(1 - beta1_) * g_hat) /
                (v_hat.sqrt() + Real(eps_));
        }
    }

private:
    double alpha_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    std::vector<Mat<Real>> m_, v_;
};

// Standalone form of the same update for scalar/oracle tests.
template <class Real>
void nadam_step(Mat<Real>& theta, const Mat<Real>& grad, Mat<Real>& m, Mat<Real>& v,
                std::uint64_t& t, double alpha = 0.002, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8) {
    ++t;
    double bc1_t = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc1_next = 1.0 - std::pow(beta1, static_cast<double>(t + 1));
    double bc2_t = 1.0 - std::pow(beta2, static_cast<double>(t));
    m = Real(beta1) * m + Real(1 - beta1) * grad;
    v = (Real(beta2) * v.array() + Real(1 - beta2) * grad.array().square()).matrix();
    theta.array() -= Real(alpha) *
                     (Real(beta1) * (m.array() / Real(bc1_next)) +
                      Real(1 - beta1) * (grad.array() / Real(bc1_t))) /
                     ((v.array() / Real(bc2_t)).sqrt() + Real(eps));
}

// ---------------------------------------------------------------------------
// The full stack: recurrent layers (each optionally followed by batchnorm and
// dropout), then the dense softmax head on the last timestep.
template <class Real>
class Network {
public:
    struct Block {
        std::unique_ptr<LstmLayer<Real>> lstm;
        std::unique_ptr<GruLayer<Real>> gru;
        std::unique_ptr<BatchNormLayer<Real>> bn;
        std::unique_ptr<DropoutLayer<Real>> dropout;
    };

    Network(const NetworkSpec& spec, std::size_t features) : spec_(spec) {
        spec.validate();
        std::mt19937_64 rng(spec.seed);
        std::size_t width = features;
        for (std::size_t li = 0; li < spec.layers.size(); ++li) {
            const LayerSpec& ls = spec.layers[li];
            Block block;
            if (spec.cell == CellKind::Lstm)
                block.lstm = std::make_unique<LstmLayer<Real>>(width, ls.width, rng);
            else
                block.gru = std::make_unique<GruLayer<Real>>(width, ls.width, rng);
            if (ls.batchnorm) block.bn = std::make_unique<BatchNormLayer<Real>>(ls.width);
            if (ls.dropout > 0)
                block.dropout = std::make_unique<DropoutLayer<Real>>(
                    ls.dropout, spec.seed ^ (0xD1B54A32D192ED03ull + li));
            blocks_.push_back(std::move(block));
            width = ls.width;
        }
        head_ = std::make_unique<DenseSoftmax<Real>>(width, spec.classes, rng);
    }

    const NetworkSpec& spec() const { return spec_; }
    std::vector<Block>& blocks() { return blocks_; }
    DenseSoftmax<Real>& head() { return *head_; }

    Mat<Real> forward(const Seq<Real>& xs, Mode mode) {
        Seq<Real> h = xs;
        for (auto& block : blocks_) {
            h = block.lstm ? block.lstm->forward(h, mode) : block.gru->forward(h, mode);
            if (block.bn) h = block.bn->forward(h, mode);
            if (block.dropout) h = block.dropout->forward(h, mode);
        }
        return head_->forward(h.back());
    }

    // Forward must have been called in train mode on the same batch.
    double backward(const Mat<Real>& truth_onehot, std::size_t timesteps) {
        Mat<Real> dh_last;
        double loss = head_->loss_and_backward(truth_onehot, dh_last);

        Seq<Real> dh(timesteps);
        for (std::size_t t = 0; t < timesteps; ++t)
            dh[t] = Mat<Real>::Zero(dh_last.rows(), dh_last.cols());
        dh.back() = dh_last;

        for (std::size_t bi = blocks_.size(); bi-- > 0;) {
            auto& block = blocks_[bi];
            if (block.dropout) dh = block.dropout->backward(dh);
            if (block.bn) dh = block.bn->backward(dh);
            dh = block.lstm ? block.lstm->backward(dh) : block.gru->backward(dh);
        }
        return loss;
    }

    std::vector<ParamRef<Real>> params() {
        std::vector<ParamRef<Real>> all;
        for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
            auto add = [&](std::vector<ParamRef<Real>> ps) {
                for (auto& p : ps) {
                    p.name = "layer" + std::to_string(bi) + "." + p.name;
                    all.push_back(p);
                }
            };
            if (blocks_[bi].lstm) add(blocks_[bi].lstm->params());
            if (blocks_[bi].gru) add(blocks_[bi].gru->params());
            if (blocks_[bi].bn) add(blocks_[bi].bn->params());
        }
        for (auto p : head_->params()) {
            p.name = "head." + p.name;
            all.push_back(p);
        }
        return all;
    }

    void zero_grads() {
        for (auto& block : blocks_) {
            if (block.lstm) block.lstm->zero_grads();
            if (block.gru) block.gru->zero_grads();
            if (block.bn) block.bn->zero_grads();
        }
        head_->zero_grads();
    }

private:
    NetworkSpec spec_;
    std::vector<Block> blocks_;
    std::unique_ptr<DenseSoftmax<Real>> head_;
};

}  // namespace mqttids::rnn
