#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "finqa/dataset.hpp"
#include "finqa/digest.hpp"
#include "finqa/errors.hpp"
#include "finqa/genclient.hpp"
#include "finqa/metrics.hpp"
#include "finqa/postprocess.hpp"
#include "finqa/retrieval.hpp"
#include "finqa/serialize.hpp"

namespace finqa {

enum class ClientMode { live, replay_strict, record };

inline std::string_view client_mode_name(ClientMode m) {
    switch (m) {
        case ClientMode::live: return "live";
        case ClientMode::replay_strict: return "replay-strict";
        case ClientMode::record: return "record";
    }
    return "unknown";
}

inline ClientMode client_mode_from_name(std::string_view name) {
    if (name == "live") return ClientMode::live;
    if (name == "replay-strict") return ClientMode::replay_strict;
    if (name == "record") return ClientMode::record;
    throw ConfigError("unknown client mode: " + std::string(name));
}

enum class ContextScope { table_only, full };

struct RunConfig {
    SerializationMethod serialization = SerializationMethod::naive;
    int chunk_max_tokens = 128;
    int chunk_overlap_tokens = 32;
    int retrieval_k = 1;  // the pipeline keeps the single best segment by default
    std::string embedder_id = "tfidf-v1";
    std::string prompt_template_id = "default";
    int qa_exemplars = 2;
    GenParams gen;
    ClientMode mode = ClientMode::replay_strict;
    std::uint64_t subsample_seed = 0;
    int subsample_size = 0;  // 0 = use every example
    ContextScope context_scope = ContextScope::full;
    std::string dataset_path;
    std::string transcript_path;
    std::string assets_dir = "assets";
    std::string output_dir = "out";
    int parallelism = 4;
};

inline nlohmann::json run_config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["serialization"] = std::string(serialization_method_name(c.serialization));
    j["chunk_max_tokens"] = c.chunk_max_tokens;
    j["chunk_overlap_tokens"] = c.chunk_overlap_tokens;
    j["retrieval_k"] = c.retrieval_k;
    j["embedder_id"] = c.embedder_id;
    j["prompt_template_id"] = c.prompt_template_id;
    j["qa_exemplars"] = c.qa_exemplars;
    j["gen"] = gen_params_to_json(c.gen);
    j["mode"] = std::string(client_mode_name(c.mode));
    j["subsample_seed"] = c.subsample_seed;
    j["subsample_size"] = c.subsample_size;
    j["context_scope"] = c.context_scope == ContextScope::table_only ? "table_only" : "full";
    j["dataset_path"] = c.dataset_path;
    j["transcript_path"] = c.transcript_path;
    j["assets_dir"] = c.assets_dir;
    j["output_dir"] = c.output_dir;
    j["parallelism"] = c.parallelism;
    return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    if (j.contains("serialization"))
        c.serialization = serialization_method_from_name(j["serialization"].get<std::string>());
    c.chunk_max_tokens = j.value("chunk_max_tokens", c.chunk_max_tokens);
    c.chunk_overlap_tokens = j.value("chunk_overlap_tokens", c.chunk_overlap_tokens);
    c.retrieval_k = j.value("retrieval_k", c.retrieval_k);
    c.embedder_id = j.value("embedder_id", c.embedder_id);
    c.prompt_template_id = j.value("prompt_template_id", c.prompt_template_id);
    c.qa_exemplars = j.value("qa_exemplars", c.qa_exemplars);
    if (j.contains("gen")) c.gen = gen_params_from_json(j["gen"]);
    if (j.contains("mode")) c.mode = client_mode_from_name(j["mode"].get<std::string>());
    c.subsample_seed = j.value("subsample_seed", c.subsample_seed);
    c.subsample_size = j.value("subsample_size", c.subsample_size);
    if (j.contains("context_scope")) {
        std::string scope = j["context_scope"].get<std::string>();
        if (scope == "table_only")
            c.context_scope = ContextScope::table_only;
        else if (scope == "full")
            c.context_scope = ContextScope::full;
        else
            throw ConfigError("unknown context scope: " + scope);
    }
    c.dataset_path = j.value("dataset_path", c.dataset_path);
    c.transcript_path = j.value("transcript_path", c.transcript_path);
    c.assets_dir = j.value("assets_dir", c.assets_dir);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.parallelism = j.value("parallelism", c.parallelism);
    if (c.chunk_max_tokens <= c.chunk_overlap_tokens || c.chunk_overlap_tokens < 0)
        throw ConfigError("need chunk_max_tokens > chunk_overlap_tokens >= 0");
    if (c.retrieval_k < 1) throw ConfigError("retrieval_k must be >= 1");
    if (c.parallelism < 1) throw ConfigError("parallelism must be >= 1");
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

// Digest of the semantic configuration: the knobs that can change a result.
// Local paths are excluded so identical runs digest identically across
// machines; input content is covered by the transcript digest.
inline std::string config_digest(const RunConfig& c) {
    auto j = run_config_to_json(c);
    for (const char* path_field :
         {"dataset_path", "transcript_path", "assets_dir", "output_dir", "parallelism"})
        j.erase(path_field);
    return digest_hex(j.dump());
}

inline std::string file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return digest_hex("");
    std::ostringstream buf;
    buf << in.rdbuf();
    return digest_hex(buf.str());
}

// ---- QA prompt template ----

struct QaExemplar {
    std::string context;
    std::string question;
    std::string answer;  // canonical answer-grammar text
};

struct QaPromptTemplate {
    std::string id;
    std::string instruction;
    std::vector<QaExemplar> exemplars;

    static QaPromptTemplate load(const std::filesystem::path& assets_dir,
                                 const std::string& template_id) {
        auto path = assets_dir / ("qa_prompt_" + template_id + ".json");
        std::ifstream in(path);
        if (!in) throw MissingTemplateAsset(path.string());
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw MissingTemplateAsset(path.string() + ": " + e.what());
        }
        QaPromptTemplate tmpl;
        tmpl.id = j.at("id").get<std::string>();
        tmpl.instruction = j.at("instruction").get<std::string>();
        for (const auto& ex : j.at("exemplars"))
            tmpl.exemplars.push_back({ex.at("context").get<std::string>(),
                                      ex.at("question").get<std::string>(),
                                      ex.at("answer").get<std::string>()});
        return tmpl;
    }
};

// Instruction first (it states the answer grammar), then k worked exemplars,
// then the target context and question. Byte-deterministic.
inline std::string build_qa_prompt(const std::string& question, const std::string& context,
                                   const QaPromptTemplate& tmpl, int exemplars) {
    std::string prompt = tmpl.instruction + "\n\n";
    int k = std::min<int>(exemplars, static_cast<int>(tmpl.exemplars.size()));
    for (int i = 0; i < k; ++i) {
        const QaExemplar& ex = tmpl.exemplars[static_cast<std::size_t>(i)];
        prompt += "Context: " + ex.context + "\nQuestion: " + ex.question + "\n" + ex.answer +
                  "\n\n";
    }
    prompt += "Context: " + context + "\nQuestion: " + question + "\n";
    return prompt;
}

struct PipelineAssets {
    QaPromptTemplate qa_template;
    std::optional<ExemplarAssets> serialization_exemplars;

    static PipelineAssets load(const RunConfig& config) {
        PipelineAssets assets;
        assets.qa_template =
            QaPromptTemplate::load(config.assets_dir, config.prompt_template_id);
        if (config.serialization == SerializationMethod::llm_few_shot) {
            assets.serialization_exemplars = ExemplarAssets::load(
                std::filesystem::path(config.assets_dir) / "serialization_exemplars.json");
        }
        return assets;
    }
};

// ---- run records ----

struct StageTimings {
    double serialize_ms = 0.0;
    double retrieve_ms = 0.0;  // chunk + index + search
    double prompt_ms = 0.0;
    double generate_ms = 0.0;
    double parse_ms = 0.0;
    double wall_ms = 0.0;
};

struct AnswerRecord {
    RunRecord core;
    std::vector<std::pair<int, double>> selected_chunks;  // (chunk id, score)
    std::string prompt_digest;
    std::optional<std::string> error;
    // Kept in memory for diagnostics; not serialized, so run-output files
    // stay byte-identical across runs.
    StageTimings timings;
};

inline nlohmann::json parsed_answer_to_json(const ParsedAnswer& parsed) {
    nlohmann::json j;
    j["status"] = std::string(parse_status_name(parsed.parse_status));
    j["stated_final"] =
        parsed.stated_final ? nlohmann::json(*parsed.stated_final) : nlohmann::json();
    j["recomputed_final"] =
        parsed.recomputed_final ? nlohmann::json(*parsed.recomputed_final) : nlohmann::json();
    j["tags"] = nlohmann::json::array();
    for (auto tag : parsed.tags) j["tags"].push_back(std::string(discrepancy_tag_name(tag)));
    j["steps"] = nlohmann::json::array();
    for (const auto& step : parsed.steps) {
        nlohmann::json s;
        if (const auto* op = std::get_if<Operator>(&step.op))
            s["op"] = std::string(operator_name(*op));
        else
            s["op"] = nlohmann::json{{"raw", std::get<std::string>(step.op)}};
        auto arg_to_json = [](const ParsedOperand& arg) -> nlohmann::json {
            if (const auto* v = std::get_if<double>(&arg)) return *v;
            if (const auto* ref = std::get_if<StepRef>(&arg))
                return nlohmann::json{{"ref", ref->index}};
            return nlohmann::json{{"raw", std::get<std::string>(arg)}};
        };
        s["arg1"] = arg_to_json(step.arg1);
        s["arg2"] = arg_to_json(step.arg2);
        s["stated"] =
            step.stated_result ? nlohmann::json(*step.stated_result) : nlohmann::json();
        j["steps"].push_back(std::move(s));
    }
    return j;
}

inline ParsedAnswer parsed_answer_from_json(const nlohmann::json& j) {
    ParsedAnswer parsed;
    std::string status = j.at("status").get<std::string>();
    parsed.parse_status = status == "clean"    ? ParseStatus::clean
                          : status == "partial" ? ParseStatus::partial
                                                 : ParseStatus::failed;
    if (j.at("stated_final").is_number()) parsed.stated_final = j["stated_final"].get<double>();
    if (j.at("recomputed_final").is_number())
        parsed.recomputed_final = j["recomputed_final"].get<double>();
    for (const auto& tag : j.at("tags")) {
        std::string name = tag.get<std::string>();
        for (int t = 0; t < 6; ++t) {
            if (discrepancy_tag_name(static_cast<DiscrepancyTag>(t)) == name)
                parsed.tags.insert(static_cast<DiscrepancyTag>(t));
        }
    }
    for (const auto& s : j.at("steps")) {
        ParsedStep step;
        if (s.at("op").is_string()) {
            auto op = operator_from_name(s["op"].get<std::string>());
            if (!op) throw MalformedFile("unknown operator in run record");
            step.op = *op;
        } else {
            step.op = s.at("op").at("raw").get<std::string>();
        }
        auto arg_from_json = [](const nlohmann::json& a) -> ParsedOperand {
            if (a.is_number()) return a.get<double>();
            if (a.is_object() && a.contains("ref")) return StepRef{a["ref"].get<int>()};
            return a.at("raw").get<std::string>();
        };
        step.arg1 = arg_from_json(s.at("arg1"));
        step.arg2 = arg_from_json(s.at("arg2"));
        if (s.at("stated").is_number()) step.stated_result = s["stated"].get<double>();
        parsed.steps.push_back(std::move(step));
    }
    return parsed;
}

inline nlohmann::json answer_record_to_json(const AnswerRecord& rec) {
    nlohmann::json j;
    j["id"] = rec.core.id;
    j["chunks"] = nlohmann::json::array();
    for (const auto& [id, score] : rec.selected_chunks)
        j["chunks"].push_back(nlohmann::json{{"id", id}, {"score", score}});
    j["prompt_digest"] = rec.prompt_digest;
    j["raw_text"] = rec.core.raw_text;
    j["parsed"] = parsed_answer_to_json(rec.core.parsed);
    j["gold_program"] = format_program(rec.core.gold_program);
    j["gold_answer_raw"] = rec.core.gold_answer_raw;
    j["gold_answer"] =
        rec.core.gold_answer ? nlohmann::json(*rec.core.gold_answer) : nlohmann::json();
    j["error"] = rec.error ? nlohmann::json(*rec.error) : nlohmann::json();
    return j;
}

inline AnswerRecord answer_record_from_json(const nlohmann::json& j) {
    AnswerRecord rec;
    rec.core.id = j.at("id").get<std::string>();
    for (const auto& c : j.at("chunks"))
        rec.selected_chunks.emplace_back(c.at("id").get<int>(), c.at("score").get<double>());
    rec.prompt_digest = j.at("prompt_digest").get<std::string>();
    rec.core.raw_text = j.at("raw_text").get<std::string>();
    rec.core.parsed = parsed_answer_from_json(j.at("parsed"));
    rec.core.gold_program = parse_program(j.at("gold_program").get<std::string>());
    rec.core.gold_answer_raw = j.at("gold_answer_raw").get<std::string>();
    if (j.at("gold_answer").is_number()) rec.core.gold_answer = j["gold_answer"].get<double>();
    if (j.at("error").is_string()) rec.error = j["error"].get<std::string>();
    return rec;
}

// ---- pipeline stages ----

namespace detail {

inline std::string join_sentences(const std::vector<std::string>& sentences) {
    std::string out;
    for (const auto& s : sentences) {
        if (!out.empty()) out += ' ';
        out += s;
    }
    return out;
}

struct StageClock {
    using clock = std::chrono::steady_clock;
    clock::time_point last = clock::now();
    double lap() {
        auto now = clock::now();
        double ms = std::chrono::duration<double, std::milli>(now - last).count();
        last = now;
        return ms;
    }
};

}  // namespace detail

// Executes all stages for one example. A stage failure (empty table, missing
// transcript entry, generation error) produces a failed record, never an
// exception: one bad example cannot abort a batch.
inline AnswerRecord run_example(const FinQAExample& example, const RunConfig& config,
                                const PipelineAssets& assets, GenClient& client) {
    AnswerRecord rec;
    rec.core.id = example.id;
    rec.core.gold_program = example.gold_program;
    rec.core.gold_answer_raw = example.gold_answer_raw;
    rec.core.gold_answer = example.gold_answer;

    auto wall_start = detail::StageClock::clock::now();
    detail::StageClock stage;
    auto fail = [&](const std::string& what) {
        rec.error = what;
        rec.core.parsed = extract_steps(rec.core.raw_text);
        apply_gold_tags(rec.core.parsed, rec.core.gold_program, rec.core.gold_answer);
        rec.timings.wall_ms = std::chrono::duration<double, std::milli>(
                                  detail::StageClock::clock::now() - wall_start)
                                  .count();
        return rec;
    };

    // serialize
    std::string table_text;
    try {
        switch (config.serialization) {
            case SerializationMethod::naive:
                table_text = serialize_naive(example.table).text;
                break;
            case SerializationMethod::llm_zero_shot:
                table_text = serialize_llm(example.table, client, PromptMode::zero_shot,
                                           config.gen)
                                 .text;
                break;
            case SerializationMethod::llm_few_shot:
                table_text = serialize_llm(
                                 example.table, client, PromptMode::few_shot, config.gen,
                                 assets.serialization_exemplars
                                     ? &*assets.serialization_exemplars
                                     : nullptr)
                                 .text;
                break;
        }
    } catch (const Error& e) {
        rec.timings.serialize_ms = stage.lap();
        return fail(std::string("serialize: ") + e.what());
    }
    rec.timings.serialize_ms = stage.lap();

    // chunk + index + search
    std::string context;
    try {
        if (config.context_scope == ContextScope::full) {
            context = detail::join_sentences(example.pre_text);
            if (!table_text.empty()) context += (context.empty() ? "" : " ") + table_text;
            std::string post = detail::join_sentences(example.post_text);
            if (!post.empty()) context += (context.empty() ? "" : " ") + post;
        } else {
            context = table_text;
        }
        auto chunks = chunk_text(context, config.chunk_max_tokens, config.chunk_overlap_tokens);
        auto index = build_index(std::move(chunks), make_embedder(config.embedder_id));
        auto hits = top_k(index, example.question, config.retrieval_k);
        context.clear();
        for (const auto& hit : hits) {
            rec.selected_chunks.emplace_back(hit.chunk.id, hit.score);
            if (!context.empty()) context += '\n';
            context += hit.chunk.text;
        }
    } catch (const Error& e) {
        rec.timings.retrieve_ms = stage.lap();
        return fail(std::string("retrieve: ") + e.what());
    }
    rec.timings.retrieve_ms = stage.lap();

    // prompt
    std::string prompt =
        build_qa_prompt(example.question, context, assets.qa_template, config.qa_exemplars);
    rec.prompt_digest = digest_hex(prompt);
    rec.timings.prompt_ms = stage.lap();

    // generate
    try {
        rec.core.raw_text = client.generate(prompt, config.gen);
    } catch (const GenerationError& e) {
        rec.timings.generate_ms = stage.lap();
        return fail(std::string("generate: ") + e.what());
    }
    rec.timings.generate_ms = stage.lap();

    // parse + recompute + gold comparison
    rec.core.parsed = recompute(extract_steps(rec.core.raw_text));
    apply_gold_tags(rec.core.parsed, rec.core.gold_program, rec.core.gold_answer);
    rec.timings.parse_ms = stage.lap();

    rec.timings.wall_ms =
        std::chrono::duration<double, std::milli>(detail::StageClock::clock::now() - wall_start)
            .count();
    return rec;
}

// Deterministic seeded subsample: indices into [0, n), sorted ascending so
// dataset order survives. Avoids std::uniform_int_distribution, whose output
// is implementation-defined.
inline std::vector<std::size_t> subsample_indices(std::size_t n, std::size_t size,
                                                  std::uint64_t seed) {
    std::vector<std::size_t> indices(n);
    for (std::size_t i = 0; i < n; ++i) indices[i] = i;
    if (size == 0 || size >= n) return indices;
    std::mt19937_64 gen(seed);
    for (std::size_t i = 0; i < size; ++i) {
        std::size_t j = i + static_cast<std::size_t>(gen() % (n - i));
        std::swap(indices[i], indices[j]);
    }
    indices.resize(size);
    std::sort(indices.begin(), indices.end());
    return indices;
}

// Runs examples with bounded parallelism; the output vector is in example
// order regardless of completion order. An exception from any single
// example becomes that example's failed record.
inline std::vector<AnswerRecord> run_examples(const std::vector<const FinQAExample*>& examples,
                                              const RunConfig& config,
                                              const PipelineAssets& assets, GenClient& client) {
    std::vector<AnswerRecord> records(examples.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= examples.size()) return;
            try {
                records[i] = run_example(*examples[i], config, assets, client);
            } catch (const std::exception& e) {
                AnswerRecord rec;
                rec.core.id = examples[i]->id;
                rec.core.gold_program = examples[i]->gold_program;
                rec.core.gold_answer_raw = examples[i]->gold_answer_raw;
                rec.core.gold_answer = examples[i]->gold_answer;
                rec.core.parsed = extract_steps("");
                rec.error = e.what();
                records[i] = std::move(rec);
            }
        }
    };
    std::size_t n_threads = std::min<std::size_t>(
        static_cast<std::size_t>(std::max(config.parallelism, 1)), examples.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    return records;
}

struct EvalOutput {
    std::vector<AnswerRecord> records;
    EvalReport report;
};

// The full protocol: optional seeded subsample, all stages per example,
// aggregation. In replay-strict mode the result is a pure function of
// (dataset, config, transcript).
inline EvalOutput evaluate(const DatasetSplit& split, const RunConfig& config,
                           const PipelineAssets& assets, GenClient& client) {
    auto indices = subsample_indices(split.examples.size(),
                                     static_cast<std::size_t>(std::max(config.subsample_size, 0)),
                                     config.subsample_seed);
    std::vector<const FinQAExample*> selected;
    selected.reserve(indices.size());
    for (auto i : indices) selected.push_back(&split.examples[i]);
    if (selected.empty()) throw EmptyRun();

    EvalOutput out;
    out.records = run_examples(selected, config, assets, client);

    std::vector<RunRecord> run_records;
    run_records.reserve(out.records.size());
    for (const auto& rec : out.records) run_records.push_back(rec.core);
    std::string transcript_digest = config.transcript_path.empty()
                                        ? digest_hex(std::string(client_mode_name(config.mode)))
                                        : file_digest(config.transcript_path);
    out.report = aggregate_report(run_records, config_digest(config), transcript_digest);
    return out;
}

inline void write_run_output(const std::vector<AnswerRecord>& records,
                             const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write run output: " + path.string());
    for (const auto& rec : records) out << answer_record_to_json(rec).dump() << '\n';
}

inline std::vector<AnswerRecord> load_run_output(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFound(path.string());
    std::vector<AnswerRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            records.push_back(answer_record_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw MalformedFile(path.string() + " line " + std::to_string(line_no) + ": " +
                                e.what());
        }
    }
    return records;
}

}  // namespace finqa
