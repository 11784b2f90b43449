#pragma once

#include "spdelab/analysis.hpp"
#include "spdelab/coupling.hpp"
#include "spdelab/integrator.hpp"
#include "spdelab/models.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace spdelab {

inline constexpr std::string_view artifact_version = "1.0.0";
inline constexpr int csv_schema_version = 1;

enum class Experiment {
    simulate,
    couple,
    holder,
    audit,
    irreducibility,
    steer,
    ergodic,
    check_conditions,
    exponents,
    convergence
};

std::string_view to_string(Experiment e);
Experiment parse_experiment(std::string_view s);
const std::vector<Experiment>& all_experiments();

/// One run, fully determined by this record. `params` holds the
/// experiment-specific keys with every default filled in.
struct ExperimentConfig {
    Experiment experiment = Experiment::exponents;
    std::uint64_t master_seed = 0;
    int samples = 1000;
    std::optional<std::string> output_dir;
    ModelSpec model;
    StepperConfig stepper;
    /// Present for couple and audit. Its stepper is always the top-level one.
    std::optional<CouplingConfig> coupling;
    nlohmann::json params = nlohmann::json::object();

    bool operator==(const ExperimentConfig&) const = default;
};

/// Every violation in the document (unknown keys, wrong types, ranges,
/// cross-field constraints). Empty means valid.
std::vector<std::string> validate_config(const nlohmann::json& doc);

/// Parse and validate; throws ConfigError listing every violation.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);

/// Canonical JSON form; parse_config(serialize(c)) == c.
nlohmann::json serialize(const ExperimentConfig& c);

/// SHA-256 (hex) of the canonical JSON without output_dir.
std::string config_hash(const ExperimentConfig& c);

/// RFC-4180 table written with CRLF line endings.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header = {}) : header_(std::move(header)) {}
    const std::vector<std::string>& header() const { return header_; }
    const std::vector<std::vector<std::string>>& rows() const { return rows_; }
    void add_row(std::vector<std::string> row);
    std::string str() const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

/// Shortest-safe round-trip text for a double ("%.17g").
std::string format_number(double v);

struct VerdictEntry {
    std::string name;
    Verdict verdict = Verdict::pass;
    std::string detail;
};

struct ExperimentOutput {
    CsvTable table;
    nlohmann::json summary = nlohmann::json::object();
    std::vector<VerdictEntry> verdicts;
};

/// Run the experiment in memory.
ExperimentOutput run_experiment(const ExperimentConfig& c, int threads = 1);

struct RunOptions {
    int threads = 1;
    std::optional<std::string> output_dir;   ///< overrides the config
    std::optional<std::uint64_t> seed_override;
};

struct RunResult {
    nlohmann::json manifest;
    int exit_code = 0;    ///< 0 all PASS/POSITIVE, 2 INCONCLUSIVE present, 1 failure
    std::string output_dir;
};

/// Run and write results.csv, summary.json and manifest.json. Runtime
/// errors are recorded in the manifest with status FAILED.
RunResult run(const ExperimentConfig& c, const RunOptions& opt);

/// SPDELAB_SEED parsed as an unsigned 64-bit integer, if set.
std::optional<std::uint64_t> seed_from_env();

int exit_code_for(const std::vector<VerdictEntry>& v, bool failed);

}  // namespace spdelab
