// finqa: batch pipeline for numerical question answering over financial
// report tables. Subcommands mirror the pipeline stages so each can be run
// and inspected on its own.
//
// Exit codes: 0 success, 1 configuration error, 2 empty run.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "finqa/genclient_http.hpp"
#include "finqa/pipeline.hpp"

using namespace finqa;
namespace fs = std::filesystem;

namespace {

struct CliOptions {
    std::string config_path;
    // overrides; empty/negative means "keep the config value"
    std::string dataset_path;
    std::string transcript_path;
    std::string assets_dir;
    std::string output_dir;
    std::string mode;
    std::string serialization;
    std::string split = "validation";
    std::string model;
    int subsample_size = -1;
    std::int64_t subsample_seed = -1;
    int retrieval_k = -1;
    int exemplars = -1;
    int parallelism = -1;
    double temperature = -1.0;
};

RunConfig resolve_config(const CliOptions& opt, bool need_dataset = true) {
    RunConfig config;
    if (!opt.config_path.empty()) config = load_run_config(opt.config_path);
    if (!opt.dataset_path.empty()) config.dataset_path = opt.dataset_path;
    if (!opt.transcript_path.empty()) config.transcript_path = opt.transcript_path;
    if (!opt.assets_dir.empty()) config.assets_dir = opt.assets_dir;
    if (!opt.output_dir.empty()) config.output_dir = opt.output_dir;
    if (!opt.mode.empty()) config.mode = client_mode_from_name(opt.mode);
    if (!opt.serialization.empty())
        config.serialization = serialization_method_from_name(opt.serialization);
    if (!opt.model.empty()) config.gen.model_name = opt.model;
    if (opt.subsample_size >= 0) config.subsample_size = opt.subsample_size;
    if (opt.subsample_seed >= 0)
        config.subsample_seed = static_cast<std::uint64_t>(opt.subsample_seed);
    if (opt.retrieval_k >= 1) config.retrieval_k = opt.retrieval_k;
    if (opt.exemplars >= 0) config.qa_exemplars = opt.exemplars;
    if (opt.parallelism >= 1) config.parallelism = opt.parallelism;
    if (opt.temperature >= 0.0) config.gen.temperature = opt.temperature;
    if (need_dataset && config.dataset_path.empty())
        throw ConfigError("no dataset path given");
    return config;
}

// Owns whichever client the mode calls for.
struct ClientBundle {
    std::unique_ptr<GenClient> replay_or_live;
    std::unique_ptr<HttpGenClient> live_inner;
    std::unique_ptr<RecordingClient> recorder;

    GenClient& client() { return recorder ? *recorder : *replay_or_live; }
};

ClientBundle make_client(const RunConfig& config) {
    ClientBundle bundle;
    switch (config.mode) {
        case ClientMode::replay_strict:
            if (config.transcript_path.empty())
                throw ConfigError("replay-strict mode needs a transcript path");
            if (!fs::exists(config.transcript_path))
                throw ConfigError("transcript file does not exist: " +
                                  config.transcript_path);
            bundle.replay_or_live = std::make_unique<ReplayClient>(
                ReplayClient::from_file(config.transcript_path, true));
            break;
        case ClientMode::live:
            bundle.replay_or_live =
                std::make_unique<HttpGenClient>(HttpClientConfig::from_env());
            break;
        case ClientMode::record: {
            if (config.transcript_path.empty())
                throw ConfigError("record mode needs a transcript path to append to");
            bundle.live_inner = std::make_unique<HttpGenClient>(HttpClientConfig::from_env());
            bundle.recorder =
                std::make_unique<RecordingClient>(*bundle.live_inner, config.transcript_path);
            break;
        }
    }
    return bundle;
}

void print_skip_summary(const DatasetSplit& split) {
    std::map<std::string, long> by_reason;
    for (const auto& s : split.skipped) ++by_reason[std::string(skip_reason_name(s.reason))];
    std::printf("loaded %zu examples, skipped %zu\n", split.examples.size(),
                split.skipped.size());
    for (const auto& [reason, count] : by_reason)
        std::printf("  skipped (%s): %ld\n", reason.c_str(), count);
}

int cmd_ingest(const CliOptions& opt, const std::string& output) {
    auto config = resolve_config(opt);
    auto split = load_dataset(config.dataset_path, opt.split);
    print_skip_summary(split);
    if (!output.empty()) {
        write_normalized(split, output);
        std::printf("normalized dataset written to %s\n", output.c_str());
    }
    return 0;
}

// Scores the configured serialization method against reference texts and
// prints the mean ROUGE row (rouge1 / rouge2 / rougeL / rougeLsum).
int cmd_serialize_compare(const RunConfig& config, const std::string& compare_path) {
    std::ifstream in(compare_path);
    if (!in) throw ConfigError("cannot open comparison file: " + compare_path);
    nlohmann::json eval_set;
    try {
        in >> eval_set;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(compare_path + ": " + e.what());
    }
    if (!eval_set.is_array() || eval_set.empty())
        throw ConfigError(compare_path + ": expected a non-empty array of "
                          "{table, reference} objects");

    std::optional<ClientBundle> bundle;
    std::optional<ExemplarAssets> exemplars;
    if (config.serialization != SerializationMethod::naive) {
        bundle.emplace(make_client(config));
        if (config.serialization == SerializationMethod::llm_few_shot)
            exemplars = ExemplarAssets::load(fs::path(config.assets_dir) /
                                             "serialization_exemplars.json");
    }

    RougeScores sums;
    for (const auto& item : eval_set) {
        Table table = item.at("table").get<Table>();
        std::string reference = item.at("reference").get<std::string>();
        std::string candidate;
        switch (config.serialization) {
            case SerializationMethod::naive:
                candidate = serialize_naive(table).text;
                break;
            case SerializationMethod::llm_zero_shot:
                candidate = serialize_llm(table, bundle->client(), PromptMode::zero_shot,
                                          config.gen)
                                .text;
                break;
            case SerializationMethod::llm_few_shot:
                candidate = serialize_llm(table, bundle->client(), PromptMode::few_shot,
                                          config.gen, &*exemplars)
                                .text;
                break;
        }
        auto scores = rouge(candidate, reference);
        sums.rouge1 += scores.rouge1;
        sums.rouge2 += scores.rouge2;
        sums.rougeL += scores.rougeL;
        sums.rougeLsum += scores.rougeLsum;
    }
    double n = static_cast<double>(eval_set.size());
    auto cell = [&](double v) {
        char buf[32];
        auto [ptr, ec] =
            std::to_chars(buf, buf + sizeof(buf), v / n, std::chars_format::fixed, 4);
        (void)ec;
        return std::string(buf, ptr);
    };
    std::printf("| method | rouge1 | rouge2 | rougeL | rougeLsum |\n");
    std::printf("| --- | --- | --- | --- | --- |\n");
    std::printf("| %s | %s | %s | %s | %s |\n",
                std::string(serialization_method_name(config.serialization)).c_str(),
                cell(sums.rouge1).c_str(), cell(sums.rouge2).c_str(),
                cell(sums.rougeL).c_str(), cell(sums.rougeLsum).c_str());
    return 0;
}

int cmd_serialize(const CliOptions& opt, const std::string& output) {
    auto config = resolve_config(opt);
    auto split = load_any_dataset(config.dataset_path, opt.split);

    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!output.empty()) {
        file.open(output);
        if (!file) throw ConfigError("cannot write " + output);
        out = &file;
    }

    std::optional<ClientBundle> bundle;
    std::optional<ExemplarAssets> exemplars;
    if (config.serialization != SerializationMethod::naive) {
        bundle.emplace(make_client(config));
        if (config.serialization == SerializationMethod::llm_few_shot)
            exemplars = ExemplarAssets::load(fs::path(config.assets_dir) /
                                             "serialization_exemplars.json");
    }

    for (const auto& ex : split.examples) {
        SerializedTable result;
        switch (config.serialization) {
            case SerializationMethod::naive:
                result = serialize_naive(ex.table);
                break;
            case SerializationMethod::llm_zero_shot:
                result = serialize_llm(ex.table, bundle->client(), PromptMode::zero_shot,
                                       config.gen);
                break;
            case SerializationMethod::llm_few_shot:
                result = serialize_llm(ex.table, bundle->client(), PromptMode::few_shot,
                                       config.gen, &*exemplars);
                break;
        }
        nlohmann::json j;
        j["id"] = ex.id;
        j["method"] = std::string(serialization_method_name(result.method));
        j["text"] = result.text;
        j["source_table_hash"] = result.source_table_hash;
        *out << j.dump() << '\n';
    }
    return 0;
}

int run_pipeline(const CliOptions& opt, const std::string& only_id, bool with_report) {
    auto config = resolve_config(opt);
    auto split = load_any_dataset(config.dataset_path, opt.split);
    if (!split.skipped.empty()) print_skip_summary(split);
    if (!only_id.empty()) {
        DatasetSplit filtered;
        filtered.name = split.name;
        for (auto& ex : split.examples)
            if (ex.id == only_id) filtered.examples.push_back(std::move(ex));
        if (filtered.examples.empty())
            throw ConfigError("no example with id " + only_id + " in the dataset");
        split = std::move(filtered);
    }

    auto assets = PipelineAssets::load(config);
    auto bundle = make_client(config);
    auto output = evaluate(split, config, assets, bundle.client());

    fs::create_directories(config.output_dir);
    auto run_path = fs::path(config.output_dir) / "run_output.jsonl";
    write_run_output(output.records, run_path);
    std::printf("run output written to %s (%zu records)\n", run_path.string().c_str(),
                output.records.size());

    if (with_report) {
        auto json_path = fs::path(config.output_dir) / "report.json";
        auto md_path = fs::path(config.output_dir) / "report.md";
        std::ofstream(json_path) << report_to_json(output.report).dump(2) << '\n';
        std::ofstream(md_path) << render_report(output.report);
        std::printf("report written to %s and %s\n", json_path.string().c_str(),
                    md_path.string().c_str());
        std::printf("tolerance accuracy: stated %.3f, recomputed %.3f\n",
                    output.report.stated_tolerance_accuracy,
                    output.report.recomputed_tolerance_accuracy);
    }
    return 0;
}

int cmd_report(const CliOptions& opt, const std::string& run_output_path) {
    auto config = resolve_config(opt);
    auto records = load_run_output(run_output_path);
    if (records.empty()) throw EmptyRun();
    std::vector<RunRecord> run_records;
    run_records.reserve(records.size());
    for (const auto& rec : records) run_records.push_back(rec.core);
    std::string transcript_digest = config.transcript_path.empty()
                                        ? digest_hex(std::string(client_mode_name(config.mode)))
                                        : file_digest(config.transcript_path);
    auto report = aggregate_report(run_records, config_digest(config), transcript_digest);

    fs::create_directories(config.output_dir);
    auto json_path = fs::path(config.output_dir) / "report.json";
    auto md_path = fs::path(config.output_dir) / "report.md";
    std::ofstream(json_path) << report_to_json(report).dump(2) << '\n';
    std::ofstream(md_path) << render_report(report);
    std::cout << render_report(report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Numerical question answering over financial-report tables"};
    app.require_subcommand(1);

    CliOptions opt;
    app.add_option("--config", opt.config_path, "JSON run-config file");
    app.add_option("--dataset", opt.dataset_path, "dataset file (FinQA array or normalized)");
    app.add_option("--transcript", opt.transcript_path, "transcript file for replay/record");
    app.add_option("--assets", opt.assets_dir, "directory holding prompt assets");
    app.add_option("--output-dir", opt.output_dir, "directory for run outputs and reports");
    app.add_option("--mode", opt.mode, "client mode: live | replay-strict | record");
    app.add_option("--serialization", opt.serialization,
                   "table serialization: naive | llm_zero_shot | llm_few_shot");
    app.add_option("--split", opt.split, "split name: train | validation | test");
    app.add_option("--model", opt.model, "generator model name");
    app.add_option("--subsample", opt.subsample_size, "evaluate a seeded random subsample");
    app.add_option("--seed", opt.subsample_seed, "subsample seed");
    app.add_option("--k", opt.retrieval_k, "retrieved chunks per question");
    app.add_option("--exemplars", opt.exemplars, "few-shot exemplars in the QA prompt");
    app.add_option("--parallelism", opt.parallelism, "concurrent examples");
    app.add_option("--temperature", opt.temperature, "generation temperature");

    std::string ingest_output, serialize_output, answer_id, run_output_path;

    auto* ingest = app.add_subcommand("ingest", "validate a dataset file and normalize it");
    ingest->add_option("--output", ingest_output, "normalized JSONL output path");

    auto* serialize = app.add_subcommand("serialize", "serialize every example's table");
    serialize->add_option("--output", serialize_output, "JSONL output path (default stdout)");
    std::string compare_path;
    serialize->add_option("--compare", compare_path,
                          "score the method against a {table, reference} file instead");

    auto* answer = app.add_subcommand("answer", "run the QA pipeline, no scoring");
    answer->add_option("--id", answer_id, "run a single example by id");

    app.add_subcommand("eval", "run the QA pipeline and score it");

    auto* report = app.add_subcommand("report", "re-aggregate an existing run output");
    report->add_option("--run-output", run_output_path, "run_output.jsonl path")->required();

    app.add_subcommand("record-transcript",
                       "run the pipeline against the live endpoint, recording responses");

    // global flags may appear after the subcommand name
    for (auto* sub : app.get_subcommands(nullptr)) sub->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest->parsed()) return cmd_ingest(opt, ingest_output);
        if (serialize->parsed()) {
            if (!compare_path.empty())
                return cmd_serialize_compare(resolve_config(opt, false), compare_path);
            return cmd_serialize(opt, serialize_output);
        }
        if (answer->parsed()) return run_pipeline(opt, answer_id, false);
        if (app.got_subcommand("eval")) return run_pipeline(opt, "", true);
        if (report->parsed()) return cmd_report(opt, run_output_path);
        if (app.got_subcommand("record-transcript")) {
            CliOptions record_opt = opt;
            record_opt.mode = "record";
            return run_pipeline(record_opt, "", false);
        }
    } catch (const EmptyRun& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
