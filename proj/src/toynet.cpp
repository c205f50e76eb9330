#include "objclear/toynet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "objclear/imaging.hpp"
#include "objclear/parallel.hpp"
#include "toynet_layers.hpp"

namespace objclear::toynet {

namespace L = layers;

namespace {

constexpr int kS = kImageSide;
constexpr int kH1 = kImageSide / 2;  // 16
constexpr int kD = kModelDim;

struct Spec {
    const char* name;
    std::vector<int> shape;
};

const std::vector<Spec>& layout() {
    static const std::vector<Spec> specs = {
        {"enc1.weight", {kEnc1Channels, kInputChannels, 3, 3}},
        {"enc1.bias", {kEnc1Channels}},
        {"enc2.weight", {kD, kEnc1Channels, 3, 3}},
        {"enc2.bias", {kD}},
        {"time.weight", {kD, kD}},
        {"time.bias", {kD}},
        {"text.tokens", {kTextTokens, kD}},
        {"obj1.weight", {kObjEnc1Channels, 3, 3, 3}},
        {"obj1.bias", {kObjEnc1Channels}},
        {"obj2.weight", {kObjEnc2Channels, kObjEnc1Channels, 3, 3}},
        {"obj2.bias", {kObjEnc2Channels}},
        {"proj1.weight", {kObjEnc2Channels, kD}},
        {"proj1.bias", {kD}},
        {"proj2.weight", {kD, kD}},
        {"proj2.bias", {kD}},
        {"null.token", {kD}},
        {"attn.q", {kD, kD}},
        {"attn.k", {kD, kD}},
        {"attn.v", {kD, kD}},
        {"attn.o", {kD, kD}},
        {"dec1.weight", {kDec1Channels, kD, 3, 3}},
        {"dec1.bias", {kDec1Channels}},
        {"dec2.weight", {3, kDec1Channels, 3, 3}},
        {"dec2.bias", {3}},
    };
    return specs;
}

// Indices into Params::tensors(), matching layout().
enum Idx : std::size_t {
    kEnc1W, kEnc1B, kEnc2W, kEnc2B, kTimeW, kTimeB, kText,
    kObj1W, kObj1B, kObj2W, kObj2B, kProj1W, kProj1B, kProj2W, kProj2B, kNull,
    kWq, kWk, kWv, kWo, kDec1W, kDec1B, kDec2W, kDec2B
};

const double* P(const Params& p, Idx i) { return p.tensors()[i].data.data(); }
double* G(Params& g, Idx i) { return g.tensors()[i].data.data(); }

void check_finite(const Raster& r, const char* what) {
    for (double v : r.values())
        if (!std::isfinite(v)) throw NumericError(std::string("toynet: non-finite value in ") + what);
}

void require_side(const Raster& r, const char* what) {
    if (r.height() != kS || r.width() != kS) {
        throw InvalidArgument(std::string("toynet: ") + what + " must be " + std::to_string(kS) + "x" +
                              std::to_string(kS));
    }
}

// HWC image -> CHW slice at `dst`.
void to_chw(const Raster& src, double* dst) {
    const int h = src.height(), w = src.width(), c = src.channels();
    for (int ch = 0; ch < c; ++ch)
        for (int r = 0; r < h; ++r)
            for (int col = 0; col < w; ++col) dst[(ch * h + r) * w + col] = src.at(r, col, ch);
}

std::vector<double> time_features(int t) {
    std::vector<double> f(kD);
    for (int i = 0; i < kD / 2; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / (kD / 2));
        f[static_cast<std::size_t>(2 * i)] = std::sin(t * freq);
        f[static_cast<std::size_t>(2 * i + 1)] = std::cos(t * freq);
    }
    return f;
}

struct GuidanceCache {
    std::vector<double> obj_in = std::vector<double>(3 * kS * kS);
    std::vector<double> o1_pre, o1_act, o2_pre, o2_act;
    std::vector<double> pooled = std::vector<double>(kObjEnc2Channels);
    std::vector<double> p1_pre, p1_act;
    Guidance guidance;
};

void run_guidance(const Image& input, const Mask& object_mask, const Params& p, bool drop,
                  GuidanceCache& c) {
    require_side(input, "input");
    require_side(object_mask, "object mask");
    to_chw(apply_mask(input, object_mask), c.obj_in.data());

    c.o1_pre.assign(static_cast<std::size_t>(kObjEnc1Channels * kH1 * kH1), 0.0);
    L::conv3x3_forward(c.obj_in.data(), 3, kS, kS, P(p, kObj1W), P(p, kObj1B), kObjEnc1Channels, 2,
                       c.o1_pre.data());
    L::silu_forward(c.o1_pre, c.o1_act);
    c.o2_pre.assign(static_cast<std::size_t>(kObjEnc2Channels * kGridSide * kGridSide), 0.0);
    L::conv3x3_forward(c.o1_act.data(), kObjEnc1Channels, kH1, kH1, P(p, kObj2W), P(p, kObj2B),
                       kObjEnc2Channels, 2, c.o2_pre.data());
    L::silu_forward(c.o2_pre, c.o2_act);
    for (int ch = 0; ch < kObjEnc2Channels; ++ch) {
        double s = 0.0;
        for (int i = 0; i < kPositions; ++i) s += c.o2_act[static_cast<std::size_t>(ch * kPositions + i)];
        c.pooled[static_cast<std::size_t>(ch)] = s / kPositions;
    }
    c.p1_pre.assign(kD, 0.0);
    L::matmul(c.pooled.data(), 1, kObjEnc2Channels, P(p, kProj1W), kD, c.p1_pre.data());
    for (int j = 0; j < kD; ++j) c.p1_pre[static_cast<std::size_t>(j)] += P(p, kProj1B)[j];
    L::silu_forward(c.p1_pre, c.p1_act);

    auto& tok = c.guidance.tokens;
    std::copy_n(P(p, kText), kTextTokens * kD, tok.begin());
    double* obj = tok.data() + kTextTokens * kD;
    if (drop) {
        std::copy_n(P(p, kNull), kD, obj);
    } else {
        L::matmul(c.p1_act.data(), 1, kD, P(p, kProj2W), kD, obj);
        for (int j = 0; j < kD; ++j) obj[j] += P(p, kProj2B)[j];
    }
    c.guidance.dropped = drop;
}

// dtokens: gradient w.r.t. the 5 x kD token block.
void guidance_backward(const GuidanceCache& c, const Params& p, const std::vector<double>& dtokens,
                       Params& g) {
    double* dtext = G(g, kText);
    for (int i = 0; i < kTextTokens * kD; ++i) dtext[i] += dtokens[static_cast<std::size_t>(i)];
    const double* dobj = dtokens.data() + kTextTokens * kD;
    if (c.guidance.dropped) {
        double* dnull = G(g, kNull);
        for (int j = 0; j < kD; ++j) dnull[j] += dobj[j];
        return;
    }
    std::vector<double> dp1_act(kD, 0.0);
    double* db2 = G(g, kProj2B);
    for (int j = 0; j < kD; ++j) db2[j] += dobj[j];
    L::matmul_backward(c.p1_act.data(), 1, kD, P(p, kProj2W), kD, dobj, G(g, kProj2W), dp1_act.data());
    std::vector<double> dp1_pre;
    L::silu_backward(c.p1_pre, dp1_act, dp1_pre);
    double* db1 = G(g, kProj1B);
    for (int j = 0; j < kD; ++j) db1[j] += dp1_pre[static_cast<std::size_t>(j)];
    std::vector<double> dpooled(kObjEnc2Channels, 0.0);
    L::matmul_backward(c.pooled.data(), 1, kObjEnc2Channels, P(p, kProj1W), kD, dp1_pre.data(),
                       G(g, kProj1W), dpooled.data());
    std::vector<double> do2_act(c.o2_act.size());
    for (int ch = 0; ch < kObjEnc2Channels; ++ch)
        for (int i = 0; i < kPositions; ++i)
            do2_act[static_cast<std::size_t>(ch * kPositions + i)] =
                dpooled[static_cast<std::size_t>(ch)] / kPositions;
    std::vector<double> do2_pre;
    L::silu_backward(c.o2_pre, do2_act, do2_pre);
    std::vector<double> do1_act(c.o1_act.size(), 0.0);
    L::conv3x3_backward(c.o1_act.data(), kObjEnc1Channels, kH1, kH1, P(p, kObj2W), kObjEnc2Channels, 2,
                        do2_pre.data(), G(g, kObj2W), G(g, kObj2B), do1_act.data());
    std::vector<double> do1_pre;
    L::silu_backward(c.o1_pre, do1_act, do1_pre);
    L::conv3x3_backward(c.obj_in.data(), 3, kS, kS, P(p, kObj1W), kObjEnc1Channels, 2, do1_pre.data(),
                        G(g, kObj1W), G(g, kObj1B), nullptr);
}

struct ForwardCache {
    std::vector<double> x = std::vector<double>(kInputChannels * kS * kS);
    std::vector<double> e1_pre, e1_act, e2_pre, e2_act;
    std::vector<double> tfeat;
    std::vector<double> feat;  // kPositions x kD, position-major
    std::vector<double> q, k, v, attn, mixed, proj, fused;
    std::vector<double> up1, d1_pre, d1_act, up2, out;
};

void run_forward(const Image& z_t, const Image& input, const Mask& object_mask, int t,
                 const Guidance& guidance, const Params& p, ForwardCache& c) {
    require_side(z_t, "z_t");
    require_side(input, "input");
    require_side(object_mask, "object mask");
    if (t < 1 || t > kLevels) throw InvalidArgument("toynet: level t must lie in [1, 20]");
    check_finite(z_t, "z_t");
    check_finite(input, "input");
    check_finite(object_mask, "object mask");

    to_chw(z_t, c.x.data());
    to_chw(input, c.x.data() + 3 * kS * kS);
    to_chw(object_mask, c.x.data() + 6 * kS * kS);

    c.e1_pre.assign(static_cast<std::size_t>(kEnc1Channels * kH1 * kH1), 0.0);
    L::conv3x3_forward(c.x.data(), kInputChannels, kS, kS, P(p, kEnc1W), P(p, kEnc1B), kEnc1Channels,
                       2, c.e1_pre.data());
    L::silu_forward(c.e1_pre, c.e1_act);
    c.e2_pre.assign(static_cast<std::size_t>(kD * kPositions), 0.0);
    L::conv3x3_forward(c.e1_act.data(), kEnc1Channels, kH1, kH1, P(p, kEnc2W), P(p, kEnc2B), kD, 2,
                       c.e2_pre.data());
    L::silu_forward(c.e2_pre, c.e2_act);

    c.tfeat = time_features(t);
    std::vector<double> temb(kD);
    L::matmul(c.tfeat.data(), 1, kD, P(p, kTimeW), kD, temb.data());
    for (int j = 0; j < kD; ++j) temb[static_cast<std::size_t>(j)] += P(p, kTimeB)[j];

    c.feat.assign(static_cast<std::size_t>(kPositions * kD), 0.0);
    for (int pos = 0; pos < kPositions; ++pos)
        for (int j = 0; j < kD; ++j)
            c.feat[static_cast<std::size_t>(pos * kD + j)] =
                c.e2_act[static_cast<std::size_t>(j * kPositions + pos)] + temb[static_cast<std::size_t>(j)];

    const double* tok = guidance.tokens.data();
    c.q.assign(static_cast<std::size_t>(kPositions * kD), 0.0);
    c.k.assign(static_cast<std::size_t>(kTokens * kD), 0.0);
    c.v.assign(static_cast<std::size_t>(kTokens * kD), 0.0);
    L::matmul(c.feat.data(), kPositions, kD, P(p, kWq), kD, c.q.data());
    L::matmul(tok, kTokens, kD, P(p, kWk), kD, c.k.data());
    L::matmul(tok, kTokens, kD, P(p, kWv), kD, c.v.data());

    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(kD));
    c.attn.assign(static_cast<std::size_t>(kPositions * kTokens), 0.0);
    for (int pos = 0; pos < kPositions; ++pos) {
        double logits[kTokens];
        double peak = -INFINITY;
        for (int tk = 0; tk < kTokens; ++tk) {
            double s = 0.0;
            for (int j = 0; j < kD; ++j) s += c.q[static_cast<std::size_t>(pos * kD + j)] * c.k[static_cast<std::size_t>(tk * kD + j)];
            logits[tk] = s * inv_sqrt;
            peak = std::max(peak, logits[tk]);
        }
        double sum = 0.0;
        for (int tk = 0; tk < kTokens; ++tk) {
            logits[tk] = std::exp(logits[tk] - peak);
            sum += logits[tk];
        }
        for (int tk = 0; tk < kTokens; ++tk) c.attn[static_cast<std::size_t>(pos * kTokens + tk)] = logits[tk] / sum;
    }

    c.mixed.assign(static_cast<std::size_t>(kPositions * kD), 0.0);
    L::matmul(c.attn.data(), kPositions, kTokens, c.v.data(), kD, c.mixed.data());
    c.proj.assign(static_cast<std::size_t>(kPositions * kD), 0.0);
    L::matmul(c.mixed.data(), kPositions, kD, P(p, kWo), kD, c.proj.data());

    // Residual, back to channel-major for the decoder.
    c.fused.assign(static_cast<std::size_t>(kD * kPositions), 0.0);
    for (int pos = 0; pos < kPositions; ++pos)
        for (int j = 0; j < kD; ++j)
            c.fused[static_cast<std::size_t>(j * kPositions + pos)] =
                c.feat[static_cast<std::size_t>(pos * kD + j)] + c.proj[static_cast<std::size_t>(pos * kD + j)];

    c.up1.assign(static_cast<std::size_t>(kD * kH1 * kH1), 0.0);
    L::upsample2_forward(c.fused.data(), kD, kGridSide, kGridSide, c.up1.data());
    c.d1_pre.assign(static_cast<std::size_t>(kDec1Channels * kH1 * kH1), 0.0);
    L::conv3x3_forward(c.up1.data(), kD, kH1, kH1, P(p, kDec1W), P(p, kDec1B), kDec1Channels, 1,
                       c.d1_pre.data());
    L::silu_forward(c.d1_pre, c.d1_act);
    c.up2.assign(static_cast<std::size_t>(kDec1Channels * kS * kS), 0.0);
    L::upsample2_forward(c.d1_act.data(), kDec1Channels, kH1, kH1, c.up2.data());
    c.out.assign(static_cast<std::size_t>(3 * kS * kS), 0.0);
    L::conv3x3_forward(c.up2.data(), kDec1Channels, kS, kS, P(p, kDec2W), P(p, kDec2B), 3, 1,
                       c.out.data());
}

// dout: gradient w.r.t. the 3 x 32 x 32 output; dattn: extra gradient w.r.t.
// the attention weights (may be empty). Returns d tokens.
std::vector<double> run_backward(const ForwardCache& c, const Guidance& guidance, const Params& p,
                                 const std::vector<double>& dout, const std::vector<double>& dattn_extra,
                                 Params& g) {
    std::vector<double> dup2(c.up2.size(), 0.0);
    L::conv3x3_backward(c.up2.data(), kDec1Channels, kS, kS, P(p, kDec2W), 3, 1, dout.data(),
                        G(g, kDec2W), G(g, kDec2B), dup2.data());
    std::vector<double> dd1_act(c.d1_act.size(), 0.0);
    L::upsample2_backward(dup2.data(), kDec1Channels, kH1, kH1, dd1_act.data());
    std::vector<double> dd1_pre;
    L::silu_backward(c.d1_pre, dd1_act, dd1_pre);
    std::vector<double> dup1(c.up1.size(), 0.0);
    L::conv3x3_backward(c.up1.data(), kD, kH1, kH1, P(p, kDec1W), kDec1Channels, 1, dd1_pre.data(),
                        G(g, kDec1W), G(g, kDec1B), dup1.data());
    std::vector<double> dfused(c.fused.size(), 0.0);
    L::upsample2_backward(dup1.data(), kD, kGridSide, kGridSide, dfused.data());

    // Position-major view of the residual gradient.
    std::vector<double> dres(static_cast<std::size_t>(kPositions * kD));
    for (int pos = 0; pos < kPositions; ++pos)
        for (int j = 0; j < kD; ++j)
            dres[static_cast<std::size_t>(pos * kD + j)] = dfused[static_cast<std::size_t>(j * kPositions + pos)];

    std::vector<double> dfeat = dres;
    std::vector<double> dmixed(c.mixed.size(), 0.0);
    L::matmul_backward(c.mixed.data(), kPositions, kD, P(p, kWo), kD, dres.data(), G(g, kWo), dmixed.data());

    // mixed = attn * v
    std::vector<double> dattn(c.attn.size(), 0.0);
    std::vector<double> dv(c.v.size(), 0.0);
    for (int pos = 0; pos < kPositions; ++pos)
        for (int tk = 0; tk < kTokens; ++tk) {
            double acc = 0.0;
            const double a = c.attn[static_cast<std::size_t>(pos * kTokens + tk)];
            for (int j = 0; j < kD; ++j) {
                const double gm = dmixed[static_cast<std::size_t>(pos * kD + j)];
                acc += gm * c.v[static_cast<std::size_t>(tk * kD + j)];
                dv[static_cast<std::size_t>(tk * kD + j)] += a * gm;
            }
            dattn[static_cast<std::size_t>(pos * kTokens + tk)] = acc;
        }
    if (!dattn_extra.empty())
        for (std::size_t i = 0; i < dattn.size(); ++i) dattn[i] += dattn_extra[i];

    // softmax backward, then the 1/sqrt(d) scaling
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(kD));
    std::vector<double> dlogit(c.attn.size(), 0.0);
    for (int pos = 0; pos < kPositions; ++pos) {
        double dot = 0.0;
        for (int tk = 0; tk < kTokens; ++tk)
            dot += dattn[static_cast<std::size_t>(pos * kTokens + tk)] * c.attn[static_cast<std::size_t>(pos * kTokens + tk)];
        for (int tk = 0; tk < kTokens; ++tk) {
            const std::size_t i = static_cast<std::size_t>(pos * kTokens + tk);
            dlogit[i] = c.attn[i] * (dattn[i] - dot) * inv_sqrt;
        }
    }
    std::vector<double> dq(c.q.size(), 0.0);
    std::vector<double> dk(c.k.size(), 0.0);
    for (int pos = 0; pos < kPositions; ++pos)
        for (int tk = 0; tk < kTokens; ++tk) {
            const double gl = dlogit[static_cast<std::size_t>(pos * kTokens + tk)];
            for (int j = 0; j < kD; ++j) {
                dq[static_cast<std::size_t>(pos * kD + j)] += gl * c.k[static_cast<std::size_t>(tk * kD + j)];
                dk[static_cast<std::size_t>(tk * kD + j)] += gl * c.q[static_cast<std::size_t>(pos * kD + j)];
            }
        }

    L::matmul_backward(c.feat.data(), kPositions, kD, P(p, kWq), kD, dq.data(), G(g, kWq), dfeat.data());
    std::vector<double> dtok(static_cast<std::size_t>(kTokens * kD), 0.0);
    L::matmul_backward(guidance.tokens.data(), kTokens, kD, P(p, kWk), kD, dk.data(), G(g, kWk), dtok.data());
    L::matmul_backward(guidance.tokens.data(), kTokens, kD, P(p, kWv), kD, dv.data(), G(g, kWv), dtok.data());

    // feat = e2_act (transposed) + temb
    std::vector<double> dtemb(kD, 0.0);
    std::vector<double> de2_act(c.e2_act.size(), 0.0);
    for (int pos = 0; pos < kPositions; ++pos)
        for (int j = 0; j < kD; ++j) {
            const double gf = dfeat[static_cast<std::size_t>(pos * kD + j)];
            dtemb[static_cast<std::size_t>(j)] += gf;
            de2_act[static_cast<std::size_t>(j * kPositions + pos)] = gf;
        }
    double* dtb = G(g, kTimeB);
    for (int j = 0; j < kD; ++j) dtb[j] += dtemb[static_cast<std::size_t>(j)];
    L::matmul_backward(c.tfeat.data(), 1, kD, P(p, kTimeW), kD, dtemb.data(), G(g, kTimeW), nullptr);

    std::vector<double> de2_pre;
    L::silu_backward(c.e2_pre, de2_act, de2_pre);
    std::vector<double> de1_act(c.e1_act.size(), 0.0);
    L::conv3x3_backward(c.e1_act.data(), kEnc1Channels, kH1, kH1, P(p, kEnc2W), kD, 2, de2_pre.data(),
                        G(g, kEnc2W), G(g, kEnc2B), de1_act.data());
    std::vector<double> de1_pre;
    L::silu_backward(c.e1_pre, de1_act, de1_pre);
    L::conv3x3_backward(c.x.data(), kInputChannels, kS, kS, P(p, kEnc1W), kEnc1Channels, 2,
                        de1_pre.data(), G(g, kEnc1W), G(g, kEnc1B), nullptr);
    return dtok;
}

Image chw_to_image(const std::vector<double>& chw) {
    Image img(kS, kS);
    for (int ch = 0; ch < 3; ++ch)
        for (int r = 0; r < kS; ++r)
            for (int col = 0; col < kS; ++col) img.at(r, col, ch) = chw[static_cast<std::size_t>((ch * kS + r) * kS + col)];
    return img;
}

AttentionMap to_attention(const std::vector<double>& a) {
    AttentionMap m;
    m.weights = a;
    return m;
}

Image noisy_target(const Image& gt, const Image& noise, double alpha_bar) {
    Image z(kS, kS);
    const double s = std::sqrt(alpha_bar), n = std::sqrt(1.0 - alpha_bar);
    auto zv = z.values();
    auto gv = gt.values();
    auto nv = noise.values();
    for (std::size_t i = 0; i < zv.size(); ++i) zv[i] = s * gv[i] + n * nv[i];
    return z;
}

}  // namespace

// ---------------------------------------------------------------------------
// Params

Params::Params() {
    for (const Spec& s : layout()) {
        const auto n = std::accumulate(s.shape.begin(), s.shape.end(), std::size_t{1},
                                       [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
        tensors_.push_back({s.name, s.shape, std::vector<double>(n, 0.0)});
    }
}

Params Params::initialize(std::uint64_t seed) {
    Params p;
    Rng rng(seed);
    for (Tensor& t : p.tensors_) {
        const bool bias = t.shape.size() == 1 && t.name.ends_with("bias");
        if (bias) continue;
        double std_dev = 1.0;
        if (t.name == "text.tokens" || t.name == "null.token") {
            std_dev = 1.0;
        } else if (t.shape.size() == 4) {
            std_dev = std::sqrt(2.0 / (t.shape[1] * 9.0));
        } else {
            std_dev = std::sqrt(1.0 / t.shape[0]);
        }
        for (double& v : t.data) v = std_dev * rng.normal();
    }
    // Start the output near mid-gray.
    for (double& v : p.get("dec2.bias").data) v = 0.5;
    return p;
}

Tensor& Params::get(std::string_view name) {
    for (Tensor& t : tensors_)
        if (t.name == name) return t;
    throw InvalidArgument("toynet: unknown parameter " + std::string(name));
}

const Tensor& Params::get(std::string_view name) const {
    return const_cast<Params*>(this)->get(name);
}

std::size_t Params::scalar_count() const noexcept {
    std::size_t n = 0;
    for (const Tensor& t : tensors_) n += t.data.size();
    return n;
}

double& Params::scalar(std::size_t flat_index) {
    for (Tensor& t : tensors_) {
        if (flat_index < t.data.size()) return t.data[flat_index];
        flat_index -= t.data.size();
    }
    throw InvalidArgument("toynet: scalar index out of range");
}

double Params::scalar(std::size_t flat_index) const { return const_cast<Params*>(this)->scalar(flat_index); }

void Params::fill(double v) {
    for (Tensor& t : tensors_) std::fill(t.data.begin(), t.data.end(), v);
}

void Params::axpy(double scale, const Params& other) {
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        auto& a = tensors_[i].data;
        const auto& b = other.tensors_[i].data;
        for (std::size_t j = 0; j < a.size(); ++j) a[j] += scale * b[j];
    }
}

bool Params::all_finite() const noexcept {
    for (const Tensor& t : tensors_)
        for (double v : t.data)
            if (!std::isfinite(v)) return false;
    return true;
}

bool Params::operator==(const Params& other) const {
    if (tensors_.size() != other.tensors_.size()) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i)
        if (tensors_[i].data != other.tensors_[i].data) return false;
    return true;
}

// ---------------------------------------------------------------------------

NoiseSchedule::NoiseSchedule() {
    for (int t = 1; t <= kLevels; ++t) {
        const double f = static_cast<double>(t - 1) / (kLevels - 1);
        alpha_bar[static_cast<std::size_t>(t - 1)] = 0.9999 + f * (0.02 - 0.9999);
    }
}

double NoiseSchedule::at(int t) const {
    if (t < 1 || t > kLevels) throw InvalidArgument("noise schedule: level out of range");
    return alpha_bar[static_cast<std::size_t>(t - 1)];
}

Mask AttentionMap::object_slice() const {
    Mask m(kGridSide, kGridSide);
    for (int pos = 0; pos < kPositions; ++pos) m.at(pos / kGridSide, pos % kGridSide) = at(pos, kTokens - 1);
    return m;
}

double AttentionMap::max_row_deviation() const {
    double worst = 0.0;
    for (int pos = 0; pos < kPositions; ++pos) {
        double s = 0.0;
        for (int tk = 0; tk < kTokens; ++tk) s += at(pos, tk);
        worst = std::max(worst, std::abs(s - 1.0));
    }
    return worst;
}

Guidance build_guidance(const Image& input, const Mask& object_mask, const Params& params, bool drop) {
    GuidanceCache c;
    run_guidance(input, object_mask, params, drop, c);
    return c.guidance;
}

ForwardResult forward(const Image& z_t, const Image& input, const Mask& object_mask, int t,
                      const Guidance& guidance, const Params& params) {
    ForwardCache c;
    run_forward(z_t, input, object_mask, t, guidance, params, c);
    ForwardResult r{chw_to_image(c.out), to_attention(c.attn)};
    check_finite(r.x0_pred, "prediction");
    return r;
}

Mask grid_mask(const Mask& object_effect_mask) {
    Mask down = resample(object_effect_mask, kGridSide, kGridSide, ResampleMode::Area);
    for (double& v : down.values()) v = v >= 0.5 ? 1.0 : 0.0;
    return down;
}

MaskLossResult mask_loss(const AttentionMap& attn, const Mask& object_effect_mask) {
    const Mask grid = grid_mask(object_effect_mask);
    MaskLossResult r;
    int nfg = 0, nbg = 0;
    double sfg = 0.0, sbg = 0.0;
    for (int pos = 0; pos < kPositions; ++pos) {
        const double a = attn.at(pos, kTokens - 1);
        if (grid.at(pos / kGridSide, pos % kGridSide) > 0.5) {
            ++nfg;
            sfg += a;
        } else {
            ++nbg;
            sbg += a;
        }
    }
    if (nfg == 0 || nbg == 0) {
        r.degenerate = true;
        return r;
    }
    r.value = sbg / nbg - sfg / nfg;
    for (int pos = 0; pos < kPositions; ++pos) {
        r.grad[static_cast<std::size_t>(pos)] =
            grid.at(pos / kGridSide, pos % kGridSide) > 0.5 ? -1.0 / nfg : 1.0 / nbg;
    }
    return r;
}

void TrainConfig::validate() const {
    if (!(lambda_mask >= 0.0)) throw InvalidArgument("train config: lambda must be >= 0");
    if (!(cfg_scale >= 1.0)) throw InvalidArgument("train config: cfg_scale must be >= 1");
    if (!(learning_rate > 0.0)) throw InvalidArgument("train config: learning rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("train config: momentum must lie in [0,1)");
    if (batch_size < 1) throw InvalidArgument("train config: batch size must be >= 1");
    if (epochs < 0) throw InvalidArgument("train config: epochs must be >= 0");
    if (!(guidance_drop_prob >= 0.0 && guidance_drop_prob <= 1.0)) {
        throw InvalidArgument("train config: guidance_drop_prob must lie in [0,1]");
    }
}

LossReport loss_and_grad(const Params& params, std::span<const TrainItem> batch,
                         std::span<const ItemDraw> draws, double lambda_mask, Params* grads, int workers) {
    if (batch.empty()) throw InvalidArgument("toynet: empty batch");
    if (draws.size() != batch.size()) throw InvalidArgument("toynet: one draw per batch item required");

    struct ItemOut {
        double mse = 0.0;
        double mask = 0.0;
        bool degenerate = false;
        std::optional<Params> grad;
    };
    static const NoiseSchedule schedule;
    std::vector<ItemOut> outs(batch.size());

    parallel_for(batch.size(), workers, [&](std::size_t i) {
        const TrainItem& item = batch[i];
        const ItemDraw& d = draws[i];
        GuidanceCache gc;
        run_guidance(item.input, item.object_mask, params, d.drop, gc);
        const Image z = noisy_target(item.ground_truth, d.noise, schedule.at(d.t));
        ForwardCache fc;
        run_forward(z, item.input, item.object_mask, d.t, gc.guidance, params, fc);

        const std::size_t n = fc.out.size();
        std::vector<double> gt(n);
        to_chw(item.ground_truth, gt.data());
        std::vector<double> dout(n);
        double sse = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double diff = fc.out[j] - gt[j];
            sse += diff * diff;
            dout[j] = 2.0 * diff / static_cast<double>(n);
        }
        ItemOut& o = outs[i];
        o.mse = sse / static_cast<double>(n);

        std::vector<double> dattn;
        if (!d.drop) {
            const MaskLossResult ml = mask_loss(to_attention(fc.attn), item.object_effect_mask);
            o.mask = ml.value;
            o.degenerate = ml.degenerate;
            if (lambda_mask != 0.0 && !ml.degenerate) {
                dattn.assign(fc.attn.size(), 0.0);
                for (int pos = 0; pos < kPositions; ++pos)
                    dattn[static_cast<std::size_t>(pos * kTokens + kTokens - 1)] =
                        lambda_mask * ml.grad[static_cast<std::size_t>(pos)];
            }
        }
        if (grads) {
            o.grad.emplace();
            const auto dtok = run_backward(fc, gc.guidance, params, dout, dattn, *o.grad);
            guidance_backward(gc, params, dtok, *o.grad);
        }
    });

    LossReport rep;
    const double inv = 1.0 / static_cast<double>(batch.size());
    if (grads) grads->fill(0.0);
    for (ItemOut& o : outs) {  // fixed index order keeps the sums reproducible
        rep.mse += o.mse;
        rep.mask_loss += o.mask;
        rep.degenerate_masks += o.degenerate ? 1 : 0;
        if (grads) grads->axpy(1.0, *o.grad);
    }
    rep.mse *= inv;
    rep.mask_loss *= inv;
    rep.total = rep.mse + lambda_mask * rep.mask_loss;
    if (grads)
        for (Tensor& t : grads->tensors())
            for (double& v : t.data) v *= inv;
    return rep;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(Params params, TrainConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    cfg_.validate();
}

std::vector<ItemDraw> Trainer::draw_items(std::size_t count) {
    std::vector<ItemDraw> draws(count);
    const std::uint64_t step_seed = Rng::splitmix(cfg_.seed ^ (0xA5A5ULL + static_cast<std::uint64_t>(step_)));
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng = Rng::derive(step_seed, i);
        ItemDraw& d = draws[i];
        d.t = rng.uniform_int(1, kLevels);
        d.noise = Image(kS, kS);
        for (double& v : d.noise.values()) v = rng.normal();
        d.drop = rng.bernoulli(cfg_.guidance_drop_prob);
    }
    return draws;
}

LossReport Trainer::train_step(std::span<const TrainItem> batch) {
    const auto draws = draw_items(batch.size());
    Params grads;
    const LossReport rep = loss_and_grad(params_, batch, draws, cfg_.lambda_mask, &grads, cfg_.workers);
    if (!std::isfinite(rep.total) || !grads.all_finite()) {
        throw NumericError("training diverged at step " + std::to_string(step_) + ": mse=" +
                           std::to_string(rep.mse) + " mask=" + std::to_string(rep.mask_loss));
    }
    auto vel = velocity_.tensors();
    auto par = params_.tensors();
    auto grd = grads.tensors();
    for (std::size_t i = 0; i < par.size(); ++i)
        for (std::size_t j = 0; j < par[i].data.size(); ++j) {
            double& v = vel[i].data[j];
            v = cfg_.momentum * v + grd[i].data[j];
            par[i].data[j] -= cfg_.learning_rate * v;
        }
    ++step_;
    return rep;
}

std::vector<LossReport> Trainer::train(std::span<const TrainItem> data,
                                       const std::function<void(int, int, const LossReport&)>& on_step) {
    if (data.empty()) throw InvalidArgument("toynet: empty training set");
    std::vector<LossReport> reports;
    std::vector<std::size_t> order(data.size());
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng = Rng::derive(cfg_.seed ^ 0x5151ULL, static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
        }
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg_.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch_size));
            std::vector<TrainItem> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
            reports.push_back(train_step(batch));
            if (on_step) on_step(step_, epoch, reports.back());
        }
    }
    return reports;
}

// ---------------------------------------------------------------------------

GradientCheckResult gradient_check(const Params& params, std::span<const TrainItem> probe,
                                   std::span<const ItemDraw> draws, double lambda_mask, int count,
                                   std::uint64_t seed, double step,
                                   const std::function<void(Params&)>& tamper) {
    Params analytic;
    loss_and_grad(params, probe, draws, lambda_mask, &analytic);
    if (tamper) tamper(analytic);

    GradientCheckResult res;
    Rng rng(seed);
    Params work = params;
    const std::size_t total = params.scalar_count();
    for (int k = 0; k < count; ++k) {
        const std::size_t idx = static_cast<std::size_t>(rng.next() % total);
        res.checked.push_back(idx);
        const double orig = work.scalar(idx);
        work.scalar(idx) = orig + step;
        const double up = loss_and_grad(work, probe, draws, lambda_mask, nullptr).total;
        work.scalar(idx) = orig - step;
        const double down = loss_and_grad(work, probe, draws, lambda_mask, nullptr).total;
        work.scalar(idx) = orig;
        const double fd = (up - down) / (2.0 * step);
        const double ga = analytic.scalar(idx);
        const double rel = std::abs(ga - fd) / std::max(1e-8, std::abs(ga) + std::abs(fd));
        if (rel > res.max_rel_error) {
            res.max_rel_error = rel;
            res.worst_index = idx;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------

InferResult infer(const Image& input, const Mask& object_mask, const Params& params, int steps,
                  double cfg_scale, std::uint64_t seed) {
    if (steps < 1 || steps > kLevels) throw InvalidArgument("infer: steps must lie in [1, 20]");
    if (!(cfg_scale >= 1.0)) throw InvalidArgument("infer: cfg_scale must be >= 1");
    if (!params.all_finite()) throw NumericError("infer: parameters contain non-finite values");

    static const NoiseSchedule schedule;
    // Evenly spaced levels from kLevels down to 1.
    std::vector<int> levels(static_cast<std::size_t>(steps));
    for (int s = 0; s < steps; ++s) {
        levels[static_cast<std::size_t>(s)] =
            steps == 1 ? 1 : kLevels - static_cast<int>(std::lround(static_cast<double>(s) * (kLevels - 1) / (steps - 1)));
    }

    Rng rng(seed);
    Image z(kS, kS);
    for (double& v : z.values()) v = rng.normal();

    const Guidance cond = build_guidance(input, object_mask, params, false);
    std::optional<Guidance> uncond;
    if (cfg_scale > 1.0) uncond = build_guidance(input, object_mask, params, true);

    InferResult res;
    Image x0;
    for (int s = 0; s < steps; ++s) {
        const int t = levels[static_cast<std::size_t>(s)];
        ForwardResult fc = forward(z, input, object_mask, t, cond, params);
        x0 = std::move(fc.x0_pred);
        if (uncond) {
            const ForwardResult fu = forward(z, input, object_mask, t, *uncond, params);
            ++res.null_evaluations;
            auto xv = x0.values();
            auto uv = fu.x0_pred.values();
            for (std::size_t i = 0; i < xv.size(); ++i) xv[i] = uv[i] + cfg_scale * (xv[i] - uv[i]);
        }
        res.attn_steps.push_back(fc.attn);
        x0 = clamp01(std::move(x0));
        if (s + 1 < steps) {
            const double ab = schedule.at(t);
            const double ab_next = schedule.at(levels[static_cast<std::size_t>(s + 1)]);
            auto zv = z.values();
            auto xv = x0.values();
            for (std::size_t i = 0; i < zv.size(); ++i) {
                const double eps = (zv[i] - std::sqrt(ab) * xv[i]) / std::sqrt(1.0 - ab);
                zv[i] = std::sqrt(ab_next) * xv[i] + std::sqrt(1.0 - ab_next) * eps;
            }
        }
    }
    res.output = std::move(x0);
    res.attn_final = res.attn_steps.back();
    check_finite(res.output, "output");
    return res;
}

MaskScores attention_scores(const AttentionMap& attn, const Mask& object_effect_mask) {
    const Mask up = resample(attn.object_slice(), object_effect_mask.height(), object_effect_mask.width(),
                             ResampleMode::Bilinear);
    return mask_metrics(up, object_effect_mask, 0.5);
}

// ---------------------------------------------------------------------------
// Checkpoints: magic, u32 version, u32 header length, JSON header, then every
// tensor as little-endian float32 in declaration order.

namespace {

constexpr char kMagic[8] = {'O', 'C', 'L', 'R', 'T', 'O', 'Y', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("checkpoint: truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Params& params, const CheckpointMeta& meta) {
    nlohmann::ordered_json h;
    h["format"] = "objclear-toynet";
    h["version"] = kVersion;
    h["architecture"] = {{"image_side", kImageSide}, {"input_channels", kInputChannels},
                         {"model_dim", kModelDim},   {"grid_side", kGridSide},
                         {"text_tokens", kTextTokens}, {"levels", kLevels},
                         {"prompt", kPrompt}};
    const TrainConfig& c = meta.config;
    h["config"] = {{"lambda_mask", c.lambda_mask}, {"learning_rate", c.learning_rate},
                   {"momentum", c.momentum},       {"epochs", c.epochs},
                   {"batch_size", c.batch_size},   {"guidance_drop_prob", c.guidance_drop_prob},
                   {"cfg_scale", c.cfg_scale},     {"seed", c.seed}};
    h["init_seed"] = meta.init_seed;
    h["steps"] = meta.steps;
    nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
    for (const Tensor& t : params.tensors()) tensors.push_back({{"name", t.name}, {"shape", t.shape}});
    h["tensors"] = tensors;
    const std::string header = h.dump();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint: " + path.string());
    os.write(kMagic, sizeof kMagic);
    put_u32(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(header.size()));
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const Tensor& t : params.tensors())
        for (double v : t.data) {
            const float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32(os, bits);
        }
    if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

Params load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path.string());
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw IoError("not a toynet checkpoint: " + path.string());
    }
    const std::uint32_t version = get_u32(is);
    if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t len = get_u32(is);
    std::string header(len, '\0');
    if (!is.read(header.data(), len)) throw IoError("checkpoint: truncated header");
    const auto h = nlohmann::json::parse(header);

    Params p;
    const auto& listed = h.at("tensors");
    if (listed.size() != p.tensors().size()) throw IoError("checkpoint: tensor count mismatch");
    for (std::size_t i = 0; i < listed.size(); ++i) {
        Tensor& t = p.tensors()[i];
        if (listed[i].at("name").get<std::string>() != t.name ||
            listed[i].at("shape").get<std::vector<int>>() != t.shape) {
            throw IoError("checkpoint: tensor " + t.name + " does not match the architecture");
        }
        for (double& v : t.data) {
            const std::uint32_t bits = get_u32(is);
            float f;
            std::memcpy(&f, &bits, 4);
            v = f;
        }
    }
    if (meta) {
        const auto& c = h.at("config");
        meta->config.lambda_mask = c.at("lambda_mask");
        meta->config.learning_rate = c.at("learning_rate");
        meta->config.momentum = c.at("momentum");
        meta->config.epochs = c.at("epochs");
        meta->config.batch_size = c.at("batch_size");
        meta->config.guidance_drop_prob = c.at("guidance_drop_prob");
        meta->config.cfg_scale = c.at("cfg_scale");
        meta->config.seed = c.at("seed");
        meta->init_seed = h.at("init_seed");
        meta->steps = h.at("steps");
    }
    return p;
}

}  // namespace objclear::toynet
