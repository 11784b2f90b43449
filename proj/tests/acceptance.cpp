// Acceptance suite: one PASS/FAIL line per criterion. Arguments select a
// subset by number; no arguments runs all of them.
#include "spdelab/analysis.hpp"
#include "spdelab/integrator.hpp"
#include "spdelab/lab.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace spdelab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

ExperimentConfig config(const std::string& name) {
    return load_config(std::string(SPDELAB_CONFIG_DIR) + "/" + name + ".json");
}

bool good(Verdict v) { return v == Verdict::pass || v == Verdict::positive; }

// Every verdict of the run must be PASS or POSITIVE; details are collected.
Outcome verdicts_of(const ExperimentOutput& out, const std::function<bool(const std::string&)>& keep = nullptr) {
    Outcome o{true, ""};
    for (const auto& v : out.verdicts) {
        if (keep && !keep(v.name)) continue;
        o.pass = o.pass && good(v.verdict);
        if (!o.detail.empty()) o.detail += "; ";
        o.detail += v.name + " " + std::string(to_string(v.verdict)) + (v.detail.empty() ? "" : " (" + v.detail + ")");
    }
    if (o.detail.empty()) o = {false, "no verdicts"};
    return o;
}

Outcome run_config(const std::string& name) { return verdicts_of(run_experiment(config(name))); }

Outcome exponents() {
    const auto a = run_config("exponents_lemma21");
    const auto b = run_config("exponents_lemma22");
    return {a.pass && b.pass, a.detail + "; " + b.detail};
}

Outcome martingale() {
    const auto out = run_experiment(config("couple_porous"));
    return verdicts_of(out, [](const std::string& n) { return n == "martingale" || n == "cap_fraction"; });
}

// Criteria 4 and 6 come from the same coupling runs.
const ExperimentOutput& audit_output() {
    static const ExperimentOutput out = run_experiment(config("audit_porous"));
    return out;
}

Outcome gap_bound() {
    return verdicts_of(audit_output(), [](const std::string& n) { return n.rfind("audit", 0) == 0; });
}

Outcome tail() {
    return verdicts_of(audit_output(), [](const std::string& n) { return n.rfind("tail", 0) == 0; });
}

Outcome linear_step() {
    ModelSpec s;
    s.r = 1.0;
    Model m(s);
    Stepper st(m, StepperConfig{});
    double worst = 0.0;
    for (double dt : {1e-3, 1e-2, 0.1}) {
        const auto y = st.step(SpectralVector::padded(16, {0.7}), dt, NoiseIncrement::zero(16));
        worst = std::max(worst, std::abs(y[0] - 0.7 / (1.0 + dt * M_PI * M_PI)));
        for (int j = 1; j < 16; ++j) worst = std::max(worst, std::abs(y[j]));
    }
    std::ostringstream d;
    d << "linear step error=" << worst;
    return {worst <= 1e-14, d.str()};
}

Outcome integrator_order() {
    const auto a = run_config("convergence_multiplicative");
    const auto b = linear_step();
    return {a.pass && b.pass, a.detail + "; " + b.detail};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Every shipped config, samples capped at 200, at 1 and 3 threads.
Outcome determinism() {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(SPDELAB_CONFIG_DIR))
        if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    const auto root = fs::temp_directory_path() / "spdelab_acceptance_determinism";
    Outcome o{true, ""};
    for (const auto& f : files) {
        auto c = load_config(f.string());
        c.samples = std::min(c.samples, 200);
        const auto stem = f.stem().string();
        const auto a = root / (stem + "_t1"), b = root / (stem + "_t3"), a2 = root / (stem + "_t1_again");
        const auto ra = run(c, RunOptions{1, a.string(), std::nullopt});
        const auto rb = run(c, RunOptions{3, b.string(), std::nullopt});
        const auto rc = run(c, RunOptions{1, a2.string(), std::nullopt});
        const bool ok = ra.manifest["status"] == "OK" && rb.manifest["status"] == "OK" && rc.manifest["status"] == "OK" &&
                        slurp(a / "results.csv") == slurp(b / "results.csv") &&
                        slurp(a / "results.csv") == slurp(a2 / "results.csv") && !slurp(a / "results.csv").empty();
        if (!ok) {
            o.pass = false;
            o.detail += stem + " differs; ";
        }
    }
    fs::remove_all(root);
    o.detail += std::to_string(files.size()) + " configs checked";
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"exponent calculators", exponents},
        {"condition certification", [] { return run_config("check_conditions_porous"); }},
        {"girsanov martingale", martingale},
        {"coupling gap bound", gap_bound},
        {"holder consistency", [] { return run_config("holder_porous"); }},
        {"coupling-time tail", tail},
        {"steering", [] { return run_config("steer_porous"); }},
        {"irreducibility", [] { return run_config("irreducibility_porous"); }},
        {"ergodic agreement", [] { return run_config("ergodic_porous"); }},
        {"integrator order", integrator_order},
        {"determinism", determinism},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k) + 1;
        if (!only.empty() && !only.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failures += !o.pass;
        std::printf("criterion %2d %s  %s [%.1fs]: %s\n", id, o.pass ? "PASS" : "FAIL", criteria[k].first.c_str(), secs,
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
