#include "lingmerge/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "lingmerge/container.hpp"
#include "lingmerge/cost.hpp"
#include "lingmerge/error.hpp"
#include "lingmerge/merge.hpp"
#include "lingmerge/metrics.hpp"
#include "lingmerge/similarity.hpp"

namespace lingmerge::cli {

namespace {

using nlohmann::json;

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::kIo: return kIoFailure;
        case ErrorCode::kNumerical: return kNumericalFailure;
        default: return kValidationFailure;
    }
}

double round4(double v) {
    const double r = std::round(v * 1e4) / 1e4;
    return r == 0.0 ? 0.0 : r;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
    auto j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::kFormat, "'" + path + "' is not valid JSON");
    return j;
}

std::vector<json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
    std::vector<json> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw Error(ErrorCode::kFormat, path + ":" + std::to_string(lineno) + ": not a JSON object");
        }
        rows.push_back(std::move(j));
    }
    return rows;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw Error(ErrorCode::kIo, "write failed on '" + path + "'");
}

// Adapters are converted to deltas; an empty label falls back to the file stem.
DeltaMap load_as_delta(const std::string& path) {
    const TensorFile file = read_tensor_file(path);
    DeltaMap delta = classify(file) == FileKind::kAdapter ? compute_delta(adapter_from_file(file)) : delta_from_file(file);
    if (delta.label.empty()) delta.label = std::filesystem::path(path).stem().string();
    return delta;
}

template <class F>
std::string field(const json& row, const char* key, std::size_t lineno, F&& convert) {
    if (!row.contains(key)) {
        throw Error(ErrorCode::kFormat, "record " + std::to_string(lineno) + " lacks \"" + key + "\"");
    }
    return convert(row[key]);
}

std::string as_label(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

std::string as_text(const json& v) {
    if (!v.is_string()) throw Error(ErrorCode::kFormat, "expected a string field");
    return v.get<std::string>();
}

json metrics_report(const std::string& task, const std::vector<json>& rows) {
    json report;
    report["task"] = task;
    report["records"] = rows.size();
    if (task == "sentiment" || task == "reasoning") {
        std::vector<metrics::LabeledPair> preds;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            preds.push_back({field(rows[i], "gold", i + 1, as_label), field(rows[i], "pred", i + 1, as_label)});
        }
        report["accuracy"] = round4(metrics::accuracy(preds));
        if (task == "sentiment") {
            const auto prf = metrics::macro_prf(preds);
            report["macro_precision"] = round4(prf.precision);
            report["macro_recall"] = round4(prf.recall);
            report["macro_f1"] = round4(prf.f1);
        }
    } else if (task == "summarization") {
        if (rows.empty()) throw Error(ErrorCode::kParameter, "no summarization records");
        metrics::Prf r1, r2, rl;
        double bert = 0.0;
        std::size_t n_bert = 0;
        auto add = [](metrics::Prf& acc, const metrics::Prf& x) {
            acc.precision += x.precision;
            acc.recall += x.recall;
            acc.f1 += x.f1;
        };
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto pair = metrics::make_text_pair(field(rows[i], "reference", i + 1, as_text),
                                                      field(rows[i], "candidate", i + 1, as_text));
            add(r1, metrics::rouge_n(pair, 1));
            add(r2, metrics::rouge_n(pair, 2));
            add(rl, metrics::rouge_l(pair));
            // Precomputed BertScore is passed through, never computed here.
            if (rows[i].contains("bertscore") && rows[i]["bertscore"].is_number()) {
                bert += rows[i]["bertscore"].get<double>();
                ++n_bert;
            }
        }
        const auto n = static_cast<double>(rows.size());
        auto emit = [&](const char* name, const metrics::Prf& acc) {
            report[name] = {{"precision", round4(acc.precision / n)},
                            {"recall", round4(acc.recall / n)},
                            {"f1", round4(acc.f1 / n)}};
        };
        emit("rouge1", r1);
        emit("rouge2", r2);
        emit("rougeL", rl);
        if (n_bert > 0) report["bertscore"] = round4(bert / static_cast<double>(n_bert));
    } else if (task == "extraction") {
        std::vector<metrics::ExtractionRecord> records;
        std::size_t examples = 0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            metrics::ExtractionRecord rec;
            rec.source = field(rows[i], "source", i + 1, as_text);
            if (!rows[i].contains("examples") || !rows[i]["examples"].is_array()) {
                throw Error(ErrorCode::kFormat, "record " + std::to_string(i + 1) + " lacks an \"examples\" array");
            }
            for (const auto& ex : rows[i]["examples"]) rec.examples.push_back(as_text(ex));
            examples += rec.examples.size();
            records.push_back(std::move(rec));
        }
        report["examples"] = examples;
        report["hallucination_rate"] = round4(metrics::hallucination_rate(records));
        report["matching"] = "case-insensitive, whitespace-collapsed substring of the source";
    } else {
        throw Error(ErrorCode::kParameter, "unknown task '" + task + "'");
    }
    return report;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Merge LoRA language adapters with TIES, DARE and KnOTS; compare training cost."};
    app.name("lingmerge");
    app.require_subcommand(1);

    // merge
    auto* merge_cmd = app.add_subcommand("merge", "Merge adapters or deltas into one delta (or adapter)");
    std::string config_path, merge_out;
    std::optional<double> density;
    std::optional<std::uint64_t> seed;
    std::vector<double> weights;
    std::optional<std::uint32_t> refactor;
    std::vector<std::string> merge_inputs;
    merge_cmd->add_option("--config", config_path, "Merge config JSON")->required();
    merge_cmd->add_option("--density", density, "Fraction of entries kept by trimming");
    merge_cmd->add_option("--seed", seed, "DARE seed");
    merge_cmd->add_option("--weights", weights, "Per-model weights, comma separated")->delimiter(',');
    merge_cmd->add_option("--refactor-rank", refactor, "Write a rank-R adapter instead of a delta");
    merge_cmd->add_option("--out", merge_out, "Output tensor file")->required();
    merge_cmd->add_option("inputs", merge_inputs, "Adapter or delta files")->required();

    // delta
    auto* delta_cmd = app.add_subcommand("delta", "Expand an adapter into its full-rank delta");
    std::string delta_out, delta_in;
    delta_cmd->add_option("--out", delta_out, "Output delta file")->required();
    delta_cmd->add_option("adapter", delta_in, "Adapter file")->required();

    // similarity
    auto* sim_cmd = app.add_subcommand("similarity", "Pairwise cosine similarity of language vectors");
    std::string csv_path;
    bool per_layer = false;
    std::vector<std::string> sim_inputs;
    sim_cmd->add_option("--csv", csv_path, "Output CSV")->required();
    sim_cmd->add_flag("--per-layer", per_layer, "Average per-layer cosines instead of flattening");
    sim_cmd->add_option("deltas", sim_inputs, "Delta or adapter files")->required();

    // cost
    auto* cost_cmd = app.add_subcommand("cost", "Retrain-all vs train-once-merge-as-needed comparison");
    std::string scenario_path, cost_json, mode;
    cost_cmd->add_option("--scenario", scenario_path, "Scenario JSON")->required();
    cost_cmd->add_option("--mode", mode, "initial or update (default: both available)")
        ->check(CLI::IsMember({"initial", "update"}));
    cost_cmd->add_option("--json", cost_json, "Write the report as JSON");

    // metrics
    auto* metrics_cmd = app.add_subcommand("metrics", "Model-free evaluation metrics over JSON lines");
    std::string task, metrics_in, metrics_json;
    metrics_cmd->add_option("--task", task, "Task type")
        ->required()
        ->check(CLI::IsMember({"sentiment", "reasoning", "summarization", "extraction"}));
    metrics_cmd->add_option("--in", metrics_in, "Input JSON lines")->required();
    metrics_cmd->add_option("--json", metrics_json, "Write the report to a file");

    // inspect
    auto* inspect_cmd = app.add_subcommand("inspect", "Print a tensor file's header, tensors and metadata");
    std::string inspect_path;
    inspect_cmd->add_option("file", inspect_path, "Tensor file")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error[E_USAGE]: " << e.what() << '\n';
        return kValidationFailure;
    }

    try {
        if (merge_cmd->parsed()) {
            MergeConfig cfg = MergeConfig::from_json(read_json_file(config_path));
            if (density) {
                cfg.density = *density;
            }
            if (seed) cfg.seed = *seed;
            if (!weights.empty()) cfg.weights = weights;
            cfg.validate(merge_inputs.size());

            std::vector<DeltaMap> deltas;
            for (const auto& path : merge_inputs) deltas.push_back(load_as_delta(path));
            const DeltaMap merged = merge(deltas, cfg);
            if (refactor) save_adapter(refactor_rank(merged, *refactor), merge_out);
            else save_delta(merged, merge_out);
            out << "merged " << deltas.size() << " inputs with " << merged.label << " -> " << merge_out << '\n';
        } else if (delta_cmd->parsed()) {
            const DeltaMap delta = compute_delta(load_adapter(delta_in));
            save_delta(delta, delta_out);
            out << "wrote " << delta.layers.size() << " delta layers -> " << delta_out << '\n';
        } else if (sim_cmd->parsed()) {
            std::vector<DeltaMap> deltas;
            for (const auto& path : sim_inputs) deltas.push_back(load_as_delta(path));
            const auto m = similarity_matrix(deltas, per_layer ? SimilarityMode::kLayerAveraged : SimilarityMode::kFlattened);
            std::ostringstream csv;
            write_similarity_csv(csv, m);
            write_text(csv_path, csv.str());
            out << csv.str();
        } else if (cost_cmd->parsed()) {
            const auto scenario = cost::CostScenario::from_json(read_json_file(scenario_path));
            std::vector<cost::ComparisonReport> reports;
            const bool has_initial = scenario.measured_initial || !scenario.per_language_hours.empty();
            const bool has_update = scenario.measured_update || scenario.update;
            if (mode == "initial" || (mode.empty() && has_initial)) reports.push_back(cost::initial_setup(scenario));
            if (mode == "update" || (mode.empty() && has_update)) reports.push_back(cost::update_language(scenario));
            if (reports.empty()) throw Error(ErrorCode::kParameter, "scenario describes neither an initial setup nor an update");
            cost::render_table(out, reports);
            if (!cost_json.empty()) {
                json j = json::array();
                for (const auto& r : reports) j.push_back(r.to_json());
                write_text(cost_json, j.dump(2) + "\n");
            }
        } else if (metrics_cmd->parsed()) {
            const json report = metrics_report(task, read_jsonl(metrics_in));
            if (!metrics_json.empty()) write_text(metrics_json, report.dump(2) + "\n");
            out << report.dump(2) << '\n';
        } else if (inspect_cmd->parsed()) {
            const json header = read_header(inspect_path);
            out << header.dump(2) << '\n';
            const TensorFile file = read_tensor_file(inspect_path);
            for (const auto& t : file.tensors) out << t.name() << ' ' << shape_to_string(t.shape()) << '\n';
            for (const auto& [k, v] : file.metadata) out << "metadata " << k << '=' << v << '\n';
        }
    } catch (const Error& e) {
        err << "error[" << error_code_name(e.code()) << "]: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const nlohmann::json::exception& e) {
        err << "error[E_FORMAT]: " << e.what() << '\n';
        return kValidationFailure;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error[E_IO]: " << e.what() << '\n';
        return kIoFailure;
    }
    return kOk;
}

}  // namespace lingmerge::cli
