#include "spdelab/lab.hpp"

#include "spdelab/conditions.hpp"
#include "spdelab/errors.hpp"
#include "spdelab/parallel.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace spdelab {

using nlohmann::json;

namespace {

// Substream reserved for fitting structural constants inside an experiment.
constexpr std::uint32_t fit_substream = 0x80000000u;

const std::vector<std::pair<Experiment, std::string_view>>& experiment_names() {
    static const std::vector<std::pair<Experiment, std::string_view>> names{
        {Experiment::simulate, "simulate"},
        {Experiment::couple, "couple"},
        {Experiment::holder, "holder"},
        {Experiment::audit, "audit"},
        {Experiment::irreducibility, "irreducibility"},
        {Experiment::steer, "steer"},
        {Experiment::ergodic, "ergodic"},
        {Experiment::check_conditions, "check_conditions"},
        {Experiment::exponents, "exponents"},
        {Experiment::convergence, "convergence"},
    };
    return names;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

// Walks one JSON object, records violations with their key path, writes the
// value actually used (defaults included) into `norm`, and reports keys that
// were never read.
class Reader {
public:
    Reader(const json* obj, std::string path, std::vector<std::string>& errs, json& norm)
        : obj_(obj), path_(std::move(path)), errs_(&errs), norm_(&norm) {
        if (!norm_->is_object()) *norm_ = json::object();
        if (obj_ && !obj_->is_object()) {
            error("", "must be an object");
            obj_ = nullptr;
        }
    }

    bool has(const std::string& key) const { return obj_ && obj_->contains(key) && !(*obj_)[key].is_null(); }

    std::optional<double> opt_num(const std::string& key) {
        const json* v = take(key);
        if (!v) return std::nullopt;
        if (!v->is_number()) {
            error(key, "must be a number");
            return std::nullopt;
        }
        const double d = v->get<double>();
        if (!std::isfinite(d)) {
            error(key, "must be finite");
            return std::nullopt;
        }
        (*norm_)[key] = d;
        return d;
    }

    double num(const std::string& key, double def) {
        auto v = opt_num(key);
        if (!v) {
            (*norm_)[key] = def;
            return def;
        }
        return *v;
    }

    /// Number required to satisfy lo < v (open) or lo <= v (closed).
    double num_min(const std::string& key, double def, double lo, bool open) {
        const double v = num(key, def);
        if (open ? !(v > lo) : !(v >= lo)) error(key, std::string("must be ") + (open ? "> " : ">= ") + fmt(lo));
        return v;
    }

    long long integer(const std::string& key, long long def, long long lo, long long hi) {
        const json* v = take(key);
        long long out = def;
        if (v) {
            if (v->is_number_integer()) {
                out = v->get<long long>();
            } else if (v->is_number_float() && std::floor(v->get<double>()) == v->get<double>() &&
                       std::abs(v->get<double>()) < 9e15) {
                out = static_cast<long long>(v->get<double>());
            } else {
                error(key, "must be an integer");
            }
        }
        if (out < lo || out > hi) error(key, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
        (*norm_)[key] = out;
        return out;
    }

    std::uint64_t u64(const std::string& key, std::uint64_t def) {
        const json* v = take(key);
        std::uint64_t out = def;
        if (v) {
            if (v->is_number_unsigned()) out = v->get<std::uint64_t>();
            else if (v->is_number_integer() && v->get<long long>() >= 0) out = static_cast<std::uint64_t>(v->get<long long>());
            else error(key, "must be a non-negative integer");
        }
        (*norm_)[key] = out;
        return out;
    }

    std::string str(const std::string& key, const std::string& def) {
        const json* v = take(key);
        std::string out = def;
        if (v) {
            if (v->is_string()) out = v->get<std::string>();
            else error(key, "must be a string");
        }
        (*norm_)[key] = out;
        return out;
    }

    std::optional<std::string> opt_str(const std::string& key) {
        const json* v = take(key);
        if (!v) return std::nullopt;
        if (!v->is_string()) {
            error(key, "must be a string");
            return std::nullopt;
        }
        (*norm_)[key] = v->get<std::string>();
        return v->get<std::string>();
    }

    std::optional<std::vector<double>> opt_vec(const std::string& key, int max_len) {
        const json* v = take(key);
        if (!v) return std::nullopt;
        auto out = parse_vec(*v, key, max_len);
        if (out) (*norm_)[key] = *out;
        return out;
    }

    std::vector<double> vec(const std::string& key, int max_len, std::vector<double> def = {}) {
        auto v = opt_vec(key, max_len);
        if (!v) {
            (*norm_)[key] = def;
            return def;
        }
        return *v;
    }

    std::vector<std::vector<double>> vec_list(const std::string& key, int max_len, std::vector<std::vector<double>> def) {
        const json* v = take(key);
        if (!v) {
            (*norm_)[key] = def;
            return def;
        }
        std::vector<std::vector<double>> out;
        if (!v->is_array() || v->empty()) {
            error(key, "must be a non-empty array of coefficient lists");
            (*norm_)[key] = def;
            return def;
        }
        for (std::size_t i = 0; i < v->size(); ++i) {
            auto e = parse_vec((*v)[i], key + "[" + std::to_string(i) + "]", max_len);
            out.push_back(e ? *e : std::vector<double>{});
        }
        (*norm_)[key] = out;
        return out;
    }

    Reader sub(const std::string& key) {
        const json* v = take(key);
        json& child = (*norm_)[key];
        child = json::object();
        return Reader(v, path_.empty() ? key : path_ + "." + key, *errs_, child);
    }

    void error(const std::string& key, const std::string& msg) {
        std::string p = path_;
        if (!key.empty()) p = p.empty() ? key : p + "." + key;
        errs_->push_back(p + ": " + msg);
    }

    void finish() {
        if (!obj_) return;
        for (auto it = obj_->begin(); it != obj_->end(); ++it)
            if (!used_.count(it.key())) error(it.key(), "unknown key");
    }

    bool boolean(const std::string& key, bool def) {
        const json* v = take(key);
        bool out = def;
        if (v) {
            if (v->is_boolean()) out = v->get<bool>();
            else error(key, "must be true or false");
        }
        (*norm_)[key] = out;
        return out;
    }

    /// Mark a key as handled elsewhere.
    void touch(const std::string& key) { used_.insert(key); }

private:
    const json* take(const std::string& key) {
        used_.insert(key);
        if (!obj_ || !obj_->contains(key)) return nullptr;
        const json& v = (*obj_)[key];
        return v.is_null() ? nullptr : &v;
    }

    std::optional<std::vector<double>> parse_vec(const json& v, const std::string& key, int max_len) {
        if (!v.is_array()) {
            error(key, "must be an array of numbers");
            return std::nullopt;
        }
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number() || !std::isfinite(e.get<double>())) {
                error(key, "entries must be finite numbers");
                return std::nullopt;
            }
            out.push_back(e.get<double>());
        }
        if (max_len >= 0 && static_cast<int>(out.size()) > max_len) {
            error(key, "has " + std::to_string(out.size()) + " entries but n_modes is " + std::to_string(max_len));
            return std::nullopt;
        }
        return out;
    }

    const json* obj_;
    std::string path_;
    std::vector<std::string>* errs_;
    json* norm_;
    std::set<std::string> used_;
};

// ---------------------------------------------------------------- typed params

struct TestFunctionSpec {
    std::string kind = "tanh_mode";
    int j = 1;
    double k = 1.0;
    std::vector<double> center;
    double radius = 0.0;

    TestFunction make(int n) const {
        if (kind == "cosine_mode") return TestFunction::cosine_mode(j, k);
        if (kind == "ball_indicator") return TestFunction::ball_indicator(SpectralVector::padded(n, center), radius);
        return TestFunction::tanh_mode(j);
    }
};

TestFunctionSpec read_test_function(Reader r, int n) {
    TestFunctionSpec f;
    f.kind = r.str("kind", "tanh_mode");
    if (f.kind == "tanh_mode" || f.kind == "cosine_mode") {
        f.j = static_cast<int>(r.integer("j", 1, 1, n));
        if (f.kind == "cosine_mode") f.k = r.num("k", 1.0);
    } else if (f.kind == "ball_indicator") {
        f.center = r.vec("center", n);
        f.radius = r.num_min("radius", 1.0, 0.0, false);
    } else {
        r.error("kind", "must be one of tanh_mode, cosine_mode, ball_indicator");
    }
    r.finish();
    return f;
}

struct SimulateParams {
    std::vector<double> x0;
    double T = 1.0;
    int save_stride = 0;
};

struct CoupleParams {
    std::vector<double> x;
    std::optional<std::vector<double>> y;
    std::optional<double> gap;
    int direction = 1;
    int fit_pairs = 10000;
    double sampler_scale = 1.0;
    double tail_factor = 1.5;
};

struct HolderParams {
    std::vector<double> x;
    double d0 = 0.2;
    int levels = 5;
    int direction = 1;
    TestFunctionSpec f;
    double T = 0.5;
    std::string kind = "lemma21";
    double theta = 3.0;
    double tolerance = 0.1;
};

struct AuditParams {
    std::vector<double> x;
    std::vector<double> gaps{0.2, 0.1, 0.05};
    int direction = 1;
    TestFunctionSpec f;
    int fit_pairs = 10000;
    double sampler_scale = 1.0;
    double tail_factor = 1.5;
};

struct IrreducibilityParams {
    std::vector<double> x, y;
    double l = 0.2;
    double T = 2.0;
    double ci_level = 0.99;
};

struct SteerParams {
    std::vector<double> z0, y;
    double t1 = 0.0, T = 1.0, R = 1.0;
    std::optional<double> K1;
    double theta = 3.0;
    int fit_pairs = 10000;
    double sampler_scale = 1.0;
    double kappa = 1e-9;
    double slack = 0.01;
};

struct ErgodicParams {
    std::vector<std::vector<double>> starts;
    TestFunctionSpec f;
    ErgodicOptions eo;
};

struct ConditionsParams {
    double theta = 3.0;
    int n_pairs = 10000;
    double sampler_scale = 1.0;
};

struct ExponentsParams {
    std::string kind = "lemma21";
    double r = 2.0;
    double theta = 3.0;
    double grid = 1e-4;
    std::optional<double> expected;
    double tolerance = 1e-12;
};

struct ConvergenceParams {
    std::vector<double> x0;
    double T = 0.5;
    std::vector<double> dt_list{0.02, 0.01, 0.005, 0.0025, 0.00125, 0.000625};
    double slope_min = 0.4;
    double slope_max = 1.1;
    bool require_decreasing = false;
};

void check_theta(const ModelSpec& m, double theta, Reader& r, const std::string& key) {
    try {
        check_theta_range(m, theta);
    } catch (const Error& e) {
        r.error(key, e.what());
    }
}

SimulateParams read_simulate(Reader& r, int n) {
    SimulateParams p;
    p.x0 = r.vec("x0", n);
    p.T = r.num_min("T", p.T, 0.0, false);
    p.save_stride = static_cast<int>(r.integer("save_stride", 0, 0, 1 << 30));
    return p;
}

CoupleParams read_couple(Reader& r, int n) {
    CoupleParams p;
    p.x = r.vec("x", n);
    p.y = r.opt_vec("y", n);
    p.gap = r.opt_num("gap");
    if (p.y.has_value() == p.gap.has_value()) r.error("", "give exactly one of y and gap");
    if (p.gap && !(*p.gap >= 0.0)) r.error("gap", "must be >= 0");
    p.direction = static_cast<int>(r.integer("direction", 1, 1, n));
    p.fit_pairs = static_cast<int>(r.integer("fit_pairs", p.fit_pairs, 1, 100000000));
    p.sampler_scale = r.num_min("sampler_scale", 1.0, 0.0, true);
    p.tail_factor = r.num_min("tail_factor", 1.5, 0.0, true);
    return p;
}

HolderParams read_holder(Reader& r, int n) {
    HolderParams p;
    p.x = r.vec("x", n);
    p.d0 = r.num_min("d0", p.d0, 0.0, true);
    p.levels = static_cast<int>(r.integer("levels", p.levels, 4, 40));
    p.direction = static_cast<int>(r.integer("direction", 1, 1, n));
    p.f = read_test_function(r.sub("f"), n);
    p.T = r.num_min("T", p.T, 0.0, true);
    p.kind = r.str("kind", p.kind);
    try {
        parse_beta_kind(p.kind);
    } catch (const Error& e) {
        r.error("kind", e.what());
    }
    p.theta = r.num_min("theta", p.theta, 0.0, true);
    p.tolerance = r.num_min("tolerance", p.tolerance, 0.0, false);
    return p;
}

AuditParams read_audit(Reader& r, int n) {
    AuditParams p;
    p.x = r.vec("x", n);
    p.gaps = r.vec("gaps", -1, p.gaps);
    if (p.gaps.empty()) r.error("gaps", "must not be empty");
    for (double g : p.gaps)
        if (!(g > 0.0)) r.error("gaps", "entries must be > 0");
    p.direction = static_cast<int>(r.integer("direction", 1, 1, n));
    p.f = read_test_function(r.sub("f"), n);
    p.fit_pairs = static_cast<int>(r.integer("fit_pairs", p.fit_pairs, 1, 100000000));
    p.sampler_scale = r.num_min("sampler_scale", 1.0, 0.0, true);
    p.tail_factor = r.num_min("tail_factor", 1.5, 0.0, true);
    return p;
}

IrreducibilityParams read_irreducibility(Reader& r, int n) {
    IrreducibilityParams p;
    p.x = r.vec("x", n);
    p.y = r.vec("y", n);
    p.l = r.num_min("l", p.l, 0.0, true);
    p.T = r.num_min("T", p.T, 0.0, false);
    p.ci_level = r.num_min("ci_level", p.ci_level, 0.0, true);
    if (!(p.ci_level < 1.0)) r.error("ci_level", "must be < 1");
    return p;
}

SteerParams read_steer(Reader& r, int n) {
    SteerParams p;
    p.z0 = r.vec("z0", n);
    p.y = r.vec("y", n);
    p.t1 = r.num_min("t1", 0.0, 0.0, false);
    p.T = r.num("T", p.T);
    if (!(p.T > p.t1)) r.error("T", "must be > t1");
    p.R = r.num_min("R", p.R, 0.0, true);
    p.K1 = r.opt_num("K1");
    if (p.K1 && !(*p.K1 >= 0.0)) r.error("K1", "must be >= 0");
    p.theta = r.num_min("theta", p.theta, 0.0, true);
    p.fit_pairs = static_cast<int>(r.integer("fit_pairs", p.fit_pairs, 1, 100000000));
    p.sampler_scale = r.num_min("sampler_scale", 1.0, 0.0, true);
    p.kappa = r.num_min("kappa", p.kappa, 0.0, true);
    p.slack = r.num_min("slack", p.slack, 0.0, false);
    return p;
}

ErgodicParams read_ergodic(Reader& r, int n) {
    ErgodicParams p;
    p.starts = r.vec_list("starts", n, {{}});
    p.f = read_test_function(r.sub("f"), n);
    p.eo.T_long = r.num_min("T_long", p.eo.T_long, 0.0, true);
    p.eo.burn_in = r.num_min("burn_in", p.eo.burn_in, 0.0, false);
    if (!(p.eo.T_long > p.eo.burn_in)) r.error("T_long", "must exceed burn_in");
    p.eo.stride = static_cast<int>(r.integer("stride", p.eo.stride, 1, 1 << 30));
    p.eo.batches = static_cast<int>(r.integer("batches", p.eo.batches, 2, 1 << 20));
    return p;
}

ConditionsParams read_conditions(Reader& r) {
    ConditionsParams p;
    p.theta = r.num_min("theta", p.theta, 0.0, true);
    p.n_pairs = static_cast<int>(r.integer("n_pairs", p.n_pairs, 1, 100000000));
    p.sampler_scale = r.num_min("sampler_scale", 1.0, 0.0, true);
    return p;
}

ExponentsParams read_exponents(Reader& r) {
    ExponentsParams p;
    p.kind = r.str("kind", p.kind);
    p.r = r.num("r", p.r);
    p.theta = r.num("theta", p.theta);
    p.grid = r.num_min("grid", p.grid, 0.0, true);
    if (!(p.grid < 0.1)) r.error("grid", "must be < 0.1");
    p.expected = r.opt_num("expected");
    p.tolerance = r.num_min("tolerance", p.tolerance, 0.0, false);
    try {
        const auto kind = parse_beta_kind(p.kind);
        if (kind == BetaKind::corollary31) {
            if (!(p.r > 1.0)) r.error("r", "corollary31 needs r > 1");
            if (!(p.theta >= 2.0 && p.theta > p.r - 1.0)) r.error("theta", "corollary31 needs theta >= 2 and theta > r - 1");
            const auto rg = corollary31_epsilon_range(p.r, p.theta);
            if (!(rg.hi > rg.lo)) r.error("", "corollary31 epsilon range is empty");
        } else {
            beta_theory(kind, p.r, p.theta);
        }
    } catch (const Error& e) {
        r.error("", e.what());
    }
    return p;
}

ConvergenceParams read_convergence(Reader& r, int n) {
    ConvergenceParams p;
    p.x0 = r.vec("x0", n);
    p.T = r.num_min("T", p.T, 0.0, true);
    p.dt_list = r.vec("dt_list", -1, p.dt_list);
    if (p.dt_list.size() < 3) r.error("dt_list", "needs at least 3 entries");
    for (std::size_t i = 0; i < p.dt_list.size(); ++i) {
        if (!(p.dt_list[i] > 0.0)) r.error("dt_list", "entries must be > 0");
        if (i > 0 && !(p.dt_list[i] < p.dt_list[i - 1])) r.error("dt_list", "must be strictly descending");
        const double k = p.T / p.dt_list[i];
        if (p.dt_list[i] > 0.0 && std::abs(k - std::round(k)) > 1e-9 * k)
            r.error("dt_list", "T must be an integer multiple of every dt (fails at dt=" + fmt(p.dt_list[i]) + ")");
    }
    p.slope_min = r.num("slope_min", p.slope_min);
    p.slope_max = r.num("slope_max", p.slope_max);
    if (!(p.slope_min <= p.slope_max)) r.error("slope_min", "must be <= slope_max");
    p.require_decreasing = r.boolean("require_decreasing", false);
    return p;
}

// ---------------------------------------------------------------- sections

void read_model(Reader r, ModelSpec& m) {
    try {
        m.kind = parse_model_kind(r.str("kind", std::string(to_string(m.kind))));
    } catch (const Error& e) {
        r.error("kind", e.what());
    }
    m.r = r.num("r", m.r);
    m.c = r.num("c", m.c);
    {
        Reader s = r.sub("space");
        m.space.d = static_cast<int>(s.integer("d", m.space.d, 1, 3));
        m.space.n_modes = static_cast<int>(s.integer("n_modes", m.space.n_modes, 1, 4096));
        m.space.gamma = s.num("gamma", m.space.gamma);
        m.space.oversample = static_cast<int>(s.integer("oversample", m.space.oversample, 1, 64));
        s.finish();
    }
    {
        Reader s = r.sub("noise");
        try {
            m.noise.family = parse_noise_family(s.str("family", std::string(to_string(m.noise.family))));
        } catch (const Error& e) {
            s.error("family", e.what());
        }
        m.noise.q = s.num("q", m.noise.q);
        m.noise.b = s.num("b", m.noise.b);
        m.noise.table = s.vec("table", -1, m.noise.table);
        m.noise.rho_floor = s.opt_num("rho_floor");
        s.finish();
    }
    m.trunc_radius = r.opt_num("trunc_radius");
    r.finish();
}

void read_stepper(Reader r, StepperConfig& st) {
    try {
        st.scheme = parse_scheme(r.str("scheme", std::string(to_string(st.scheme))));
    } catch (const Error& e) {
        r.error("scheme", e.what());
    }
    st.dt = r.num("dt", st.dt);
    st.newton_tol = r.num("newton_tol", st.newton_tol);
    st.newton_max_iter = static_cast<int>(r.integer("newton_max_iter", st.newton_max_iter, 1, 100000));
    st.dt_min = r.opt_num("dt_min");
    r.finish();
}

void read_coupling(Reader r, CouplingConfig& c) {
    c.alpha = r.opt_num("alpha");
    c.epsilon = r.opt_num("epsilon");
    c.theta = r.num("theta", c.theta);
    c.T = r.num("T", c.T);
    c.couple_tol = r.num("couple_tol", c.couple_tol);
    c.drift_cap = r.num("drift_cap", c.drift_cap);
    try {
        c.mode = parse_coupling_mode(r.str("mode", std::string(to_string(c.mode))));
    } catch (const Error& e) {
        r.error("mode", e.what());
    }
    c.max_level = static_cast<int>(r.integer("max_level", c.max_level, 0, 30));
    r.finish();
}

bool uses_coupling(Experiment e) { return e == Experiment::couple || e == Experiment::audit; }

// Parse everything; `errs` collects every violation.
ExperimentConfig parse_into(const json& doc, std::vector<std::string>& errs) {
    ExperimentConfig c;
    json norm = json::object();
    Reader top(&doc, "", errs, norm);
    if (!doc.is_object()) return c;
    const auto exp_name = top.opt_str("experiment");
    bool exp_ok = false;
    if (!exp_name) {
        top.error("experiment", "is required");
    } else {
        try {
            c.experiment = parse_experiment(*exp_name);
            exp_ok = true;
        } catch (const Error& e) {
            top.error("experiment", e.what());
        }
    }
    c.master_seed = top.u64("master_seed", 0);
    c.samples = static_cast<int>(top.integer("samples", c.samples, 1, 100000000));
    c.output_dir = top.opt_str("output_dir");
    read_model(top.sub("model"), c.model);
    read_stepper(top.sub("stepper"), c.stepper);

    for (const auto& v : c.model.violations()) errs.push_back("model: " + v);
    for (const auto& v : c.stepper.violations()) errs.push_back(v);
    const bool model_ok = c.model.violations().empty();
    const int n = c.model.space.n_modes;

    if (top.has("coupling") || (exp_ok && uses_coupling(c.experiment))) {
        CouplingConfig cc;
        read_coupling(top.sub("coupling"), cc);
        cc.stepper = c.stepper;
        if (exp_ok && !uses_coupling(c.experiment)) {
            top.error("coupling", "only applies to the couple and audit experiments");
        } else {
            for (const auto& v : cc.violations(c.model))
                if (v.rfind("stepper", 0) != 0) errs.push_back("coupling: " + v);
            if (model_ok) check_theta(c.model, cc.theta, top, "coupling.theta");
        }
        c.coupling = cc;
    }

    json pnorm = json::object();
    top.touch("params");
    const json* psrc = doc.contains("params") && !doc["params"].is_null() ? &doc["params"] : nullptr;
    Reader pr(psrc, "params", errs, pnorm);
    if (exp_ok) {
        switch (c.experiment) {
            case Experiment::simulate: read_simulate(pr, n); break;
            case Experiment::couple: read_couple(pr, n); break;
            case Experiment::holder: {
                const auto p = read_holder(pr, n);
                try {
                    const auto kind = parse_beta_kind(p.kind);
                    if (kind != BetaKind::corollary31) beta_theory(kind, c.model.r, p.theta);
                } catch (const Error& e) {
                    pr.error("kind", e.what());
                }
                break;
            }
            case Experiment::audit: read_audit(pr, n); break;
            case Experiment::irreducibility: {
                read_irreducibility(pr, n);
                if (c.model.noise.family == NoiseFamily::weyl_example && !c.model.noise.rho_floor)
                    errs.emplace_back("model.noise: irreducibility needs rho_floor > 0 for state-dependent noise");
                break;
            }
            case Experiment::steer: {
                const auto p = read_steer(pr, n);
                if (!p.K1 && model_ok) check_theta(c.model, p.theta, pr, "theta");
                break;
            }
            case Experiment::ergodic: {
                read_ergodic(pr, n);
                if (c.model.c > 0.0) errs.emplace_back("model.c: ergodic needs a dissipative model (c <= 0)");
                break;
            }
            case Experiment::check_conditions: {
                const auto p = read_conditions(pr);
                if (model_ok) check_theta(c.model, p.theta, pr, "theta");
                break;
            }
            case Experiment::exponents: read_exponents(pr); break;
            case Experiment::convergence: read_convergence(pr, n); break;
        }
        pr.finish();
    }
    c.params = pnorm;
    top.finish();
    return c;
}

// ---------------------------------------------------------------- output helpers

json estimate_json(const EstimateResult& e) {
    return json{{"mean", e.mean},
                {"std_error", e.std_error},
                {"n_samples", e.n_samples},
                {"ci_level", e.ci_level},
                {"ci_low", e.ci_low()},
                {"ci_high", e.ci_high()},
                {"master_seed", e.master_seed},
                {"substream_begin", e.substream_begin},
                {"substream_end", e.substream_end}};
}

std::string b(bool v) { return v ? "1" : "0"; }

VerdictEntry verdict(std::string name, bool ok, std::string detail) {
    return {std::move(name), ok ? Verdict::pass : Verdict::fail, std::move(detail)};
}

// y = x + d * (H-unit vector along mode j).
SpectralVector shifted(const SpectralSpace& sp, const SpectralVector& x, int j, double d) {
    Eigen::VectorXd c = x.coeffs();
    c[j - 1] += d / sp.h_scale()[j - 1];
    return SpectralVector(std::move(c));
}

ConditionReport fit_report(const Model& m, double theta, int pairs, double scale, std::uint64_t seed, int threads) {
    return check_conditions(m, theta, pairs, SamplerSpec{scale}, seed, fit_substream, threads);
}

json coupling_summary_json(const CouplingSummary& s) {
    return json{{"R", estimate_json(s.R)},
                {"abs_1_minus_R", estimate_json(s.abs_1mR)},
                {"p_tail", estimate_json(s.p_tail)},
                {"R_log_R", estimate_json(s.R_logR)},
                {"I_theta", estimate_json(s.I_theta)},
                {"tau", estimate_json(s.tau)},
                {"total_steps", s.total_steps},
                {"cap_events", s.cap_events},
                {"cap_fraction", s.cap_fraction}};
}

bool martingale_ok(const CouplingSummary& s) { return std::abs(s.R.mean - 1.0) <= 3.0 * s.R.std_error; }

// ---------------------------------------------------------------- experiments

template <class P, class F>
P typed_params(const ExperimentConfig& c, F read) {
    std::vector<std::string> errs;
    json norm = json::object();
    Reader r(&c.params, "params", errs, norm);
    P p = read(r);
    r.finish();
    if (!errs.empty()) throw ConfigError(errs);
    return p;
}

ExperimentOutput run_simulate(const ExperimentConfig& c, const Model& m, int threads) {
    const int n = m.n();
    const auto p = typed_params<SimulateParams>(c, [&](Reader& r) { return read_simulate(r, n); });
    const auto x0 = SpectralVector::padded(n, p.x0);
    auto paths = parallel_map(
        static_cast<std::size_t>(c.samples), threads, [&] { return Stepper(m, c.stepper); },
        [&](Stepper& st, std::size_t k) {
            return simulate_path(st, x0, p.T, PathOptions{c.master_seed, static_cast<std::uint32_t>(k), p.save_stride});
        });
    std::vector<std::string> header{"path", "t"};
    for (int j = 1; j <= n; ++j) header.push_back("c_" + std::to_string(j));
    ExperimentOutput out;
    out.table = CsvTable(header);
    std::vector<double> sup(paths.size()), term(paths.size());
    for (std::size_t k = 0; k < paths.size(); ++k) {
        const auto& pr = paths[k];
        auto emit = [&](double t, const Eigen::VectorXd& x) {
            std::vector<std::string> row{std::to_string(k), format_number(t)};
            for (int j = 0; j < n; ++j) row.push_back(format_number(x[j]));
            out.table.add_row(std::move(row));
        };
        if (p.save_stride > 0) {
            for (std::size_t i = 0; i < pr.times.size(); ++i) emit(pr.times[i], pr.states[i]);
        } else {
            emit(p.T, pr.terminal.coeffs());
        }
        sup[k] = pr.sup_h_norm2;
        term[k] = m.space().h_inner(pr.terminal.coeffs(), pr.terminal.coeffs());
    }
    const auto es = summarize_samples(sup, c.master_seed, 0, c.samples);
    out.summary["mean_sup_h_norm2"] = estimate_json(es);
    out.summary["mean_terminal_h_norm2"] = estimate_json(summarize_samples(term, c.master_seed, 0, c.samples));
    if (p.T > 0.0) {
        const double C = fit_moment_constant(es.mean, p.T, m.space().h_inner(x0.coeffs(), x0.coeffs()));
        out.summary["moment_constant"] = C;
        out.verdicts.push_back(verdict("moment_bound", std::isfinite(C), "fitted C=" + fmt(C)));
    }
    return out;
}

ExperimentOutput run_couple(const ExperimentConfig& c, const Model& m, int threads) {
    const int n = m.n();
    const auto p = typed_params<CoupleParams>(c, [&](Reader& r) { return read_couple(r, n); });
    const auto& cc = *c.coupling;
    const auto x = SpectralVector::padded(n, p.x);
    const auto y = p.y ? SpectralVector::padded(n, *p.y) : shifted(m.space(), x, p.direction, *p.gap);
    const double gap = m.space().h_norm(x.coeffs() - y.coeffs());
    const GapOptions go{c.master_seed, 0, threads};
    const auto samples = coupling_samples(m, x, y, cc, c.samples, go);
    ExperimentOutput out;
    out.table = CsvTable({"run", "coupled", "tau", "logR_T", "I_theta", "quad_var", "cap_events", "steps"});
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const auto& s = samples[k];
        out.table.add_row({std::to_string(k), b(s.coupled), format_number(s.tau), format_number(s.logR),
                           format_number(s.I_theta), format_number(s.quad_var), std::to_string(s.cap_events),
                           std::to_string(s.steps)});
    }
    const auto cs = summarize_coupling(samples, cc.T, go);
    const double eps = cc.resolved_epsilon(), alpha = cc.resolved_alpha(m.spec());
    out.summary = coupling_summary_json(cs);
    out.summary["gap"] = gap;
    out.summary["epsilon"] = eps;
    out.summary["alpha"] = alpha;
    out.verdicts.push_back(verdict("martingale", martingale_ok(cs),
                                   "mean R=" + fmt(cs.R.mean) + " se=" + fmt(cs.R.std_error)));
    out.verdicts.push_back(verdict("cap_fraction", cs.cap_fraction < 0.01, "fraction=" + fmt(cs.cap_fraction)));
    if (cc.mode == CouplingMode::lemma21 && gap > 0.0) {
        const auto rep = fit_report(m, cc.theta, p.fit_pairs, p.sampler_scale, c.master_seed, threads);
        out.summary["fitted_K1"] = rep.fitted_K1;
        out.summary["fitted_delta1"] = rep.fitted_delta1;
        const double tb = p.tail_factor * coupling_tail_bound(gap, eps, alpha, rep.fitted_K1, cc.T);
        out.summary["tail_bound"] = tb;
        out.verdicts.push_back(verdict("tail_bound", cs.p_tail.mean <= tb, "P=" + fmt(cs.p_tail.mean) + " bound=" + fmt(tb)));
        try {
            const double ib = integral_bound(gap, m.r(), cc.theta, eps, rep.fitted_K1, rep.fitted_delta1, cc.T);
            out.summary["integral_bound"] = ib;
            out.verdicts.push_back(verdict("integral_bound", cs.I_theta.mean <= ib + 3.0 * cs.I_theta.std_error,
                                           "I=" + fmt(cs.I_theta.mean) + " bound=" + fmt(ib)));
        } catch (const ParameterError& e) {
            out.summary["integral_bound_note"] = e.what();
        }
    }
    return out;
}

ExperimentOutput run_holder(const ExperimentConfig& c, const Model& m, int threads) {
    const int n = m.n();
    const auto p = typed_params<HolderParams>(c, [&](Reader& r) { return read_holder(r, n); });
    const auto x = SpectralVector::padded(n, p.x);
    std::vector<SpectralVector> ys;
    std::vector<double> dist;
    for (int k = 0; k < p.levels; ++k) {
        dist.push_back(p.d0 * std::ldexp(1.0, -k));
        ys.push_back(shifted(m.space(), x, p.direction, dist.back()));
    }
    const auto est =
        mc_gap_multi(m, p.f.make(n), x, ys, p.T, c.samples, c.stepper, GapOptions{c.master_seed, 0, threads});
    ExperimentOutput out;
    out.table = CsvTable({"k", "distance", "gap", "std_error"});
    std::vector<GapPoint> pts;
    for (int k = 0; k < p.levels; ++k) {
        out.table.add_row({std::to_string(k), format_number(dist[k]), format_number(est[k].mean),
                           format_number(est[k].std_error)});
        pts.push_back({dist[k], est[k].mean, est[k].std_error});
    }
    const auto fit = holder_fit(pts);
    const double th = beta_theory(parse_beta_kind(p.kind), m.r(), p.theta);
    out.summary = json{{"beta_hat", fit.beta},
                       {"intercept", fit.intercept},
                       {"ci_low", fit.ci_low},
                       {"ci_high", fit.ci_high},
                       {"ci_level", fit.ci_level},
                       {"n_used", fit.n_used},
                       {"precise", fit.precise},
                       {"beta_theory", th},
                       {"threshold", th - p.tolerance}};
    out.verdicts.push_back(verdict("holder_slope", fit.beta >= th - p.tolerance,
                                   "beta_hat=" + fmt(fit.beta) + " threshold=" + fmt(th - p.tolerance)));
    out.verdicts.push_back({"precision", fit.precise ? Verdict::pass : Verdict::inconclusive,
                            fit.precise ? "every gap has std_error < gap/3" : "some gap has std_error >= gap/3"});
    return out;
}

ExperimentOutput run_audit(const ExperimentConfig& c, const Model& m, int threads) {
    const int n = m.n();
    const auto p = typed_params<AuditParams>(c, [&](Reader& r) { return read_audit(r, n); });
    const auto& cc = *c.coupling;
    const auto x = SpectralVector::padded(n, p.x);
    const auto f = p.f.make(n);
    std::vector<double> gaps = p.gaps;
    std::sort(gaps.begin(), gaps.end(), std::greater<>());
    std::vector<SpectralVector> ys;
    for (double g : gaps) ys.push_back(shifted(m.space(), x, p.direction, g));
    const auto lhs = mc_gap_multi(m, f, x, ys, cc.T, c.samples, cc.stepper, GapOptions{c.master_seed, 0, threads});
    const GapOptions co{c.master_seed, static_cast<std::uint32_t>(c.samples), threads};
    const double eps = cc.resolved_epsilon(), alpha = cc.resolved_alpha(m.spec());
    std::optional<ConditionReport> rep;
    if (cc.mode == CouplingMode::lemma21) rep = fit_report(m, cc.theta, p.fit_pairs, p.sampler_scale, c.master_seed, threads);

    ExperimentOutput out;
    out.table = CsvTable({"distance", "lhs", "lhs_se", "mean_R", "mean_R_se", "abs_1_minus_R",
                                   "abs_1_minus_R_se", "p_tail", "p_tail_se", "rhs", "pooled_se", "margin",
                                   "audit_pass", "tail_bound", "cap_fraction"});
    out.summary["epsilon"] = eps;
    out.summary["alpha"] = alpha;
    if (rep) {
        out.summary["fitted_K1"] = rep->fitted_K1;
        out.summary["fitted_delta1"] = rep->fitted_delta1;
    }
    json rows = json::array();
    std::vector<double> tails;
    bool tails_bounded = true;
    std::string tail_detail;
    for (std::size_t i = 0; i < gaps.size(); ++i) {
        const auto cs = summarize_coupling(coupling_samples(m, x, ys[i], cc, c.samples, co), cc.T, co);
        const auto a = make_audit(lhs[i], cs, f.sup_norm());
        double tb = std::numeric_limits<double>::quiet_NaN();
        if (rep) {
            tb = p.tail_factor * coupling_tail_bound(gaps[i], eps, alpha, rep->fitted_K1, cc.T);
            if (!(cs.p_tail.mean <= tb)) tails_bounded = false;
            tail_detail += (tail_detail.empty() ? "" : "; ") + ("d=" + fmt(gaps[i]) + " P=" + fmt(cs.p_tail.mean) +
                                                                 " bound=" + fmt(tb));
        }
        tails.push_back(cs.p_tail.mean);
        out.table.add_row({format_number(gaps[i]), format_number(a.lhs.mean), format_number(a.lhs.std_error),
                           format_number(cs.R.mean), format_number(cs.R.std_error), format_number(cs.abs_1mR.mean),
                           format_number(cs.abs_1mR.std_error), format_number(cs.p_tail.mean),
                           format_number(cs.p_tail.std_error), format_number(a.rhs), format_number(a.pooled_se),
                           format_number(a.margin), b(a.pass), format_number(tb), format_number(cs.cap_fraction)});
        json row = coupling_summary_json(cs);
        row["distance"] = gaps[i];
        row["lhs"] = estimate_json(a.lhs);
        row["rhs"] = a.rhs;
        row["pooled_se"] = a.pooled_se;
        row["margin"] = a.margin;
        row["pass"] = a.pass;
        if (rep) row["tail_bound"] = tb;
        rows.push_back(row);
        out.verdicts.push_back(verdict("audit d=" + fmt(gaps[i]), a.pass,
                                       "lhs=" + fmt(a.lhs.mean) + " rhs=" + fmt(a.rhs) + " margin=" + fmt(a.margin)));
        out.verdicts.push_back(verdict("martingale d=" + fmt(gaps[i]), martingale_ok(cs),
                                       "mean R=" + fmt(cs.R.mean) + " se=" + fmt(cs.R.std_error)));
        out.verdicts.push_back(verdict("cap_fraction d=" + fmt(gaps[i]), cs.cap_fraction < 0.01,
                                       "fraction=" + fmt(cs.cap_fraction)));
    }
    out.summary["gaps"] = rows;
    // Distances are sorted descending, so the tail must not increase along the list.
    bool mono = true;
    for (std::size_t i = 1; i < tails.size(); ++i)
        if (tails[i] > tails[i - 1]) mono = false;
    out.verdicts.push_back(verdict("tail_monotone", mono, "P(tau>=T) non-decreasing in distance"));
    if (rep) out.verdicts.push_back(verdict("tail_bound", tails_bounded, tail_detail));
    return out;
}

ExperimentOutput run_irreducibility(const ExperimentConfig& c, const Model& m, int threads) {
    const int n = m.n();
    const auto p = typed_params<IrreducibilityParams>(c, [&](Reader& r) { return read_irreducibility(r, n); });
    const auto res = irreducibility_probe(m, SpectralVector::padded(n, p.x), SpectralVector::padded(n, p.y), p.l, p.T,
                                          c.samples, c.stepper, GapOptions{c.master_seed, 0, threads}, p.ci_level);
    ExperimentOutput out;
    out.table = CsvTable({"path", "hit", "distance"});
    for (std::size_t k = 0; k < res.distances.size(); ++k)
        out.table.add_row({std::to_string(k), b(res.distances[k] <= p.l), format_number(res.distances[k])});
    out.summary = json{{"frequency", estimate_json(res.frequency)},
                       {"hits", res.hits},
                       {"cp_low", res.cp_low},
                       {"cp_high", res.cp_high},
                       {"ci_level", p.ci_level}};
    out.verdicts.push_back({"irreducibility", res.verdict,
                            "hits=" + std::to_string(res.hits) + " exact lower bound=" + fmt(res.cp_low)});
    return out;
}

ExperimentOutput run_steer(const ExperimentConfig& c, const Model& m, int threads) {
    const int n = m.n();
    const auto p = typed_params<SteerParams>(c, [&](Reader& r) { return read_steer(r, n); });
    double K1 = 0.0;
    if (p.K1) {
        K1 = *p.K1;
    } else {
        K1 = fit_report(m, p.theta, p.fit_pairs, p.sampler_scale, c.master_seed, threads).fitted_K1;
    }
    const auto res = steer_deterministic(m, SpectralVector::padded(n, p.z0), SpectralVector::padded(n, p.y), p.t1, p.T,
                                         K1, p.R, c.stepper, SteerOptions{p.kappa, p.slack});
    ExperimentOutput out;
    out.table = CsvTable({"t", "gap", "bound"});
    for (std::size_t i = 0; i < res.times.size(); ++i)
        out.table.add_row({format_number(res.times[i]), format_number(res.gaps[i]), format_number(res.bounds[i])});
    out.summary = json{{"K1", K1},
                       {"K1_fitted", !p.K1.has_value()},
                       {"C_R", res.C_R},
                       {"terminal_gap", res.terminal_gap},
                       {"success_threshold", 10.0 * p.kappa},
                       {"bound_ok", res.bound_ok},
                       {"first_violation", res.first_violation}};
    out.verdicts.push_back(verdict("steer_terminal", res.success, "terminal gap=" + fmt(res.terminal_gap)));
    out.verdicts.push_back(verdict("decay_bound", res.bound_ok,
                                   res.bound_ok ? "bound holds along the trajectory"
                                                : "first violation at t=" + fmt(res.first_violation)));
    return out;
}

ExperimentOutput run_ergodic(const ExperimentConfig& c, const Model& m, int threads) {
    const int n = m.n();
    const auto p = typed_params<ErgodicParams>(c, [&](Reader& r) { return read_ergodic(r, n); });
    std::vector<SpectralVector> starts;
    for (const auto& s : p.starts) starts.push_back(SpectralVector::padded(n, s));
    const auto res = ergodic_average(m, p.f.make(n), starts, c.stepper, p.eo, c.master_seed, threads);
    ExperimentOutput out;
    out.table = CsvTable({"start", "mean", "std_error", "n_samples"});
    json avgs = json::array();
    for (std::size_t i = 0; i < res.averages.size(); ++i) {
        const auto& a = res.averages[i];
        out.table.add_row({std::to_string(i), format_number(a.mean), format_number(a.std_error),
                           std::to_string(a.n_samples)});
        avgs.push_back(estimate_json(a));
    }
    out.summary = json{{"averages", avgs}, {"worst_ratio", res.worst_ratio}, {"agree", res.agree}};
    out.verdicts.push_back(verdict("ergodic_agreement", res.agree, "worst |diff|/SE=" + fmt(res.worst_ratio)));
    return out;
}

ExperimentOutput run_conditions(const ExperimentConfig& c, const Model& m, int threads) {
    const auto p = typed_params<ConditionsParams>(c, [&](Reader& r) { return read_conditions(r); });
    const auto rep = check_conditions(m, p.theta, p.n_pairs, SamplerSpec{p.sampler_scale}, c.master_seed, 0, threads);
    ExperimentOutput out;
    out.table = CsvTable({"quantity", "value"});
    const std::vector<std::pair<std::string, double>> q{
        {"n_pairs", rep.n_pairs},
        {"violations", rep.violations},
        {"fitted_K1", rep.fitted_K1},
        {"fitted_delta1", rep.fitted_delta1},
        {"worst_margin", rep.worst_margin},
        {"c1_coe", rep.c1_coe},
        {"c2_coe", rep.c2_coe},
        {"c3_coe", rep.c3_coe},
        {"coercivity_violations", rep.coercivity_violations},
        {"c3_growth", rep.c3_growth},
        {"c5_growth", rep.c5_growth},
        {"c_tilde", rep.c_tilde},
    };
    for (const auto& [k, v] : q) {
        out.table.add_row({k, format_number(v)});
        out.summary[k] = v;
    }
    out.summary["theta"] = rep.theta;
    out.summary["condition"] = rep.condition;
    out.summary["coercivity_condition"] = rep.coercivity_condition;
    out.summary["notes"] = rep.notes;
    out.verdicts.push_back(verdict("conditions", rep.pass(),
                                   std::to_string(rep.violations) + " violations, delta1=" + fmt(rep.fitted_delta1)));
    return out;
}

ExperimentOutput run_exponents(const ExperimentConfig& c) {
    const auto p = typed_params<ExponentsParams>(c, [&](Reader& r) { return read_exponents(r); });
    const auto kind = parse_beta_kind(p.kind);
    const double beta = beta_theory(kind, p.r, p.theta, p.grid);
    ExperimentOutput out;
    out.table = CsvTable({"quantity", "value"});
    out.table.add_row({"beta", format_number(beta)});
    out.summary["kind"] = p.kind;
    out.summary["r"] = p.r;
    out.summary["theta"] = p.theta;
    out.summary["beta"] = beta;
    if (kind != BetaKind::lemma22) {
        const auto rg = kind == BetaKind::lemma21 ? lemma21_epsilon_range(p.r, p.theta)
                                                  : corollary31_epsilon_range(p.r, p.theta);
        out.table.add_row({"epsilon_lo", format_number(rg.lo)});
        out.table.add_row({"epsilon_hi", format_number(rg.hi)});
        out.summary["epsilon_range"] = {rg.lo, rg.hi};
    }
    if (p.expected) {
        out.verdicts.push_back(verdict("beta_value", std::abs(beta - *p.expected) <= p.tolerance,
                                       "beta=" + format_number(beta) + " expected=" + format_number(*p.expected)));
    }
    return out;
}

ExperimentOutput run_convergence(const ExperimentConfig& c, const Model& m, int threads) {
    const int n = m.n();
    const auto p = typed_params<ConvergenceParams>(c, [&](Reader& r) { return read_convergence(r, n); });
    const auto res = convergence_probe(m, SpectralVector::padded(n, p.x0), p.T, p.dt_list, c.samples, c.stepper,
                                       c.master_seed, threads);
    ExperimentOutput out;
    out.table = CsvTable({"dt", "mean_error", "std_error"});
    bool decreasing = true;
    for (std::size_t i = 0; i < res.points.size(); ++i) {
        const auto& pt = res.points[i];
        out.table.add_row({format_number(pt.dt), format_number(pt.mean_error), format_number(pt.std_error)});
        if (i > 0 && !(pt.mean_error < res.points[i - 1].mean_error)) decreasing = false;
    }
    out.summary = json{{"slope", res.slope}, {"n_paths", res.n_paths}, {"errors_decreasing", decreasing}};
    out.verdicts.push_back(verdict("slope", res.slope >= p.slope_min && res.slope <= p.slope_max,
                                   "slope=" + fmt(res.slope) + " range=[" + fmt(p.slope_min) + ", " +
                                       fmt(p.slope_max) + "]"));
    if (p.require_decreasing) out.verdicts.push_back(verdict("errors_decreasing", decreasing, ""));
    return out;
}

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + p.string() + " for writing");
    os << content;
    if (!os) throw Error("failed writing " + p.string());
}

}  // namespace

// ---------------------------------------------------------------- public API

std::string_view to_string(Experiment e) {
    for (const auto& [k, v] : experiment_names())
        if (k == e) return v;
    return "?";
}

Experiment parse_experiment(std::string_view s) {
    for (const auto& [k, v] : experiment_names())
        if (v == s) return k;
    std::string all;
    for (const auto& [k, v] : experiment_names()) all += (all.empty() ? "" : ", ") + std::string(v);
    throw ParameterError("unknown experiment '" + std::string(s) + "' (expected one of " + all + ")");
}

const std::vector<Experiment>& all_experiments() {
    static const std::vector<Experiment> all = [] {
        std::vector<Experiment> v;
        for (const auto& [k, name] : experiment_names()) v.push_back(k);
        return v;
    }();
    return all;
}

std::vector<std::string> validate_config(const json& doc) {
    std::vector<std::string> errs;
    if (!doc.is_object()) {
        errs.emplace_back("config must be a JSON object");
        return errs;
    }
    parse_into(doc, errs);
    return errs;
}

ExperimentConfig parse_config(const json& doc) {
    std::vector<std::string> errs;
    if (!doc.is_object()) throw ConfigError({"config must be a JSON object"});
    auto c = parse_into(doc, errs);
    if (!errs.empty()) throw ConfigError(errs);
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError({"cannot read config file " + path});
    json doc;
    try {
        doc = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError({path + ": " + e.what()});
    }
    return parse_config(doc);
}

json serialize(const ExperimentConfig& c) {
    json j;
    j["experiment"] = std::string(to_string(c.experiment));
    j["master_seed"] = c.master_seed;
    j["samples"] = c.samples;
    if (c.output_dir) j["output_dir"] = *c.output_dir;
    const auto& m = c.model;
    json model{{"kind", std::string(to_string(m.kind))},
               {"r", m.r},
               {"c", m.c},
               {"space",
                {{"d", m.space.d}, {"n_modes", m.space.n_modes}, {"gamma", m.space.gamma}, {"oversample", m.space.oversample}}},
               {"noise", {{"family", std::string(to_string(m.noise.family))}, {"q", m.noise.q}, {"b", m.noise.b}, {"table", m.noise.table}}}};
    if (m.noise.rho_floor) model["noise"]["rho_floor"] = *m.noise.rho_floor;
    if (m.trunc_radius) model["trunc_radius"] = *m.trunc_radius;
    j["model"] = model;
    json st{{"scheme", std::string(to_string(c.stepper.scheme))},
            {"dt", c.stepper.dt},
            {"newton_tol", c.stepper.newton_tol},
            {"newton_max_iter", c.stepper.newton_max_iter}};
    if (c.stepper.dt_min) st["dt_min"] = *c.stepper.dt_min;
    j["stepper"] = st;
    if (c.coupling) {
        const auto& cc = *c.coupling;
        json cj{{"theta", cc.theta},
                {"T", cc.T},
                {"couple_tol", cc.couple_tol},
                {"drift_cap", cc.drift_cap},
                {"mode", std::string(to_string(cc.mode))},
                {"max_level", cc.max_level}};
        if (cc.alpha) cj["alpha"] = *cc.alpha;
        if (cc.epsilon) cj["epsilon"] = *cc.epsilon;
        j["coupling"] = cj;
    }
    j["params"] = c.params;
    return j;
}

std::string config_hash(const ExperimentConfig& c) {
    json j = serialize(c);
    j.erase("output_dir");
    return sha256_hex(j.dump());
}

void CsvTable::add_row(std::vector<std::string> row) {
    if (row.size() != header_.size())
        throw ShapeError("CSV row has " + std::to_string(row.size()) + " fields, header has " +
                         std::to_string(header_.size()));
    rows_.push_back(std::move(row));
}

std::string CsvTable::str() const {
    auto field = [](const std::string& s) {
        if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char ch : s) {
            if (ch == '"') q += '"';
            q += ch;
        }
        return q + "\"";
    };
    std::string out;
    auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (i) out += ',';
            out += field(r[i]);
        }
        out += "\r\n";
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

ExperimentOutput run_experiment(const ExperimentConfig& c, int threads) {
    if (c.experiment == Experiment::exponents) return run_exponents(c);
    const Model m(c.model);
    c.stepper.validate();
    switch (c.experiment) {
        case Experiment::simulate: return run_simulate(c, m, threads);
        case Experiment::couple: return run_couple(c, m, threads);
        case Experiment::holder: return run_holder(c, m, threads);
        case Experiment::audit: return run_audit(c, m, threads);
        case Experiment::irreducibility: return run_irreducibility(c, m, threads);
        case Experiment::steer: return run_steer(c, m, threads);
        case Experiment::ergodic: return run_ergodic(c, m, threads);
        case Experiment::check_conditions: return run_conditions(c, m, threads);
        case Experiment::convergence: return run_convergence(c, m, threads);
        case Experiment::exponents: break;
    }
    throw ParameterError("unhandled experiment");
}

std::optional<std::uint64_t> seed_from_env() {
    const char* s = std::getenv("SPDELAB_SEED");
    if (!s || !*s) return std::nullopt;
    std::string v(s);
    if (v.find_first_not_of("0123456789") != std::string::npos)
        throw ConfigError({"SPDELAB_SEED must be an unsigned decimal integer, got '" + v + "'"});
    try {
        std::size_t pos = 0;
        const unsigned long long x = std::stoull(v, &pos, 10);
        return static_cast<std::uint64_t>(x);
    } catch (const std::exception&) {
        throw ConfigError({"SPDELAB_SEED out of range: '" + v + "'"});
    }
}

int exit_code_for(const std::vector<VerdictEntry>& v, bool failed) {
    if (failed) return 1;
    bool inconclusive = false;
    for (const auto& e : v) {
        if (e.verdict == Verdict::fail) return 1;
        if (e.verdict == Verdict::inconclusive) inconclusive = true;
    }
    return inconclusive ? 2 : 0;
}

RunResult run(const ExperimentConfig& config, const RunOptions& opt) {
    ExperimentConfig c = config;
    if (opt.seed_override) c.master_seed = *opt.seed_override;
    namespace fs = std::filesystem;
    const std::string dir = opt.output_dir  ? *opt.output_dir
                            : c.output_dir ? *c.output_dir
                                           : "spdelab_out/" + std::string(to_string(c.experiment));
    fs::create_directories(dir);
    const fs::path base(dir);

    RunResult res;
    res.output_dir = dir;
    json manifest{{"artifact_version", std::string(artifact_version)},
                  {"csv_schema_version", csv_schema_version},
                  {"experiment", std::string(to_string(c.experiment))},
                  {"config_hash", config_hash(c)},
                  {"config", serialize(c)},
                  {"master_seed", c.master_seed},
                  {"seed_source", opt.seed_override ? "SPDELAB_SEED" : "config"},
                  {"threads", opt.threads},
                  {"timestamp", utc_timestamp()}};
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<VerdictEntry> verdicts;
    bool failed = false;
    try {
        auto out = run_experiment(c, opt.threads);
        verdicts = out.verdicts;
        json vj = json::array();
        for (const auto& v : verdicts)
            vj.push_back({{"name", v.name}, {"verdict", std::string(to_string(v.verdict))}, {"detail", v.detail}});
        out.summary["verdicts"] = vj;
        write_file(base / "results.csv", out.table.str());
        write_file(base / "summary.json", out.summary.dump(2) + "\n");
        manifest["summary"] = out.summary;
        manifest["verdicts"] = vj;
        manifest["status"] = "OK";
    } catch (const std::exception& e) {
        failed = true;
        std::error_code ec;
        fs::remove(base / "results.csv", ec);
        fs::remove(base / "summary.json", ec);
        manifest["status"] = "FAILED";
        manifest["error"] = e.what();
        manifest["verdicts"] = json::array();
    }
    manifest["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.exit_code = exit_code_for(verdicts, failed);
    manifest["exit_code"] = res.exit_code;
    write_file(base / "manifest.json", manifest.dump(2) + "\n");
    res.manifest = std::move(manifest);
    return res;
}

}  // namespace spdelab
