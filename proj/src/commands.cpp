// SPDX-License-Identifier: Apache-2.0

#include "phred/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "phred/checkpoint.hpp"
#include "phred/corpus.hpp"
#include "phred/evaluation.hpp"
#include "phred/logging.hpp"
#include "phred/service.hpp"
#include "phred/training.hpp"

namespace phred {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_json(const fs::path& path, const ordered_json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

std::string file_fingerprint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return hex64(fnv1a64(buf.str()));
}

ordered_json corpus_fingerprints(const fs::path& data) {
    ordered_json out = ordered_json::object();
    if (fs::is_regular_file(data)) {
        out[data.filename().string()] = file_fingerprint(data);
        return out;
    }
    for (const char* name : {"train.jsonl", "valid.jsonl", "test.jsonl", "attributes.txt", "attribute_map.jsonl"}) {
        if (fs::exists(data / name)) out[name] = file_fingerprint(data / name);
    }
    return out;
}

const std::vector<Conversation>& pick_split(const Corpus& corpus, const std::string& split) {
    if (split == "train") return corpus.train;
    if (split == "valid") return corpus.valid;
    if (split == "test") return corpus.test;
    throw UsageError("unknown split '" + split + "' (expected train, valid or test)");
}

Corpus ingest_for(const PhredModel& model, const fs::path& data) {
    IngestOptions opts;
    opts.vocab_size = model.config().vocab_size;
    opts.vocabulary = model.vocabulary();
    opts.attributes = model.attributes();
    return ingest(data, opts);
}

std::vector<Sentence> read_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<Sentence> out;
    for (std::string line; std::getline(in, line);) out.push_back(tokenize(line));
    return out;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
    std::string config, data, out, variant, manifest;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
};

int cmd_train(const TrainArgs& a) {
    json config_json = json::object();
    std::string data = a.data;
    if (!a.manifest.empty()) {
        const json m = read_json(a.manifest);
        config_json = m.at("config");
        if (data.empty()) data = m.at("data").get<std::string>();
    } else if (!a.config.empty()) {
        config_json = read_json(a.config);
    }
    if (data.empty()) throw UsageError("--data is required");
    if (!a.variant.empty()) {
        try {
            parse_variant(a.variant);
        } catch (const ConfigError& e) {
            throw UsageError(e.what());
        }
        const bool was_d = config_json.value("variant", std::string("phredgan_d")) == "phredgan_d";
        config_json["variant"] = a.variant;
        if (a.variant != "phredgan_d" && was_d && config_json.contains("lambda_g_att")) {
            logging::info("variant ", a.variant, " has no attribute discriminator; dropping lambda_g_att");
            config_json.erase("lambda_g_att");
        }
    }
    if (a.seed) config_json["seed"] = *a.seed;
    if (a.epochs) config_json["epochs"] = *a.epochs;
    Config cfg;
    try {
        cfg = Config::from_json(config_json);
        cfg.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }

    const fs::path out(a.out);
    fs::create_directories(out);
    ordered_json manifest;
    manifest["tool"] = "phred";
    manifest["version"] = kToolVersion;
    manifest["command"] = "train";
    manifest["config"] = cfg.to_json();
    manifest["seed"] = cfg.seed;
    manifest["data"] = fs::absolute(data).lexically_normal().string();
    manifest["corpus_fingerprints"] = corpus_fingerprints(data);
    manifest["out"] = fs::absolute(out).lexically_normal().string();
    write_json(out / "run_manifest.json", manifest);

    IngestOptions opts;
    opts.vocab_size = cfg.vocab_size;
    const Corpus corpus = ingest(data, opts);
    if (corpus.train.empty()) throw std::runtime_error("no usable training conversations in " + data);
    PhredModel model(cfg, corpus.vocabulary, corpus.attributes);
    TrainOptions topts;
    topts.out_dir = out;
    const TrainReport report = train(model, corpus.train, topts);

    ordered_json r;
    r["variant"] = to_string(cfg.variant);
    r["epochs_completed"] = report.epochs_completed;
    r["steps"] = report.steps.size();
    r["aborted"] = report.aborted;
    if (report.aborted) r["abort_reason"] = report.abort_reason;
    r["final"] = report.steps.empty() ? ordered_json(nullptr) : report.steps.back().to_json();
    ordered_json ckpts = ordered_json::array();
    for (const auto& c : report.checkpoints) ckpts.push_back(c.filename().string());
    r["checkpoints"] = ckpts;
    if (!report.aborted && !corpus.valid.empty()) {
        r["valid_perplexity"] = teacher_forced_perplexity(model, corpus.valid, model.noise(0.0), cfg.seed).perplexity;
        if (model.att()) r["valid_attribute_accuracy"] = attribute_accuracy(model, corpus.valid);
    }
    write_json(out / "train_report.json", r);
    logging::info("training finished in ", report.wall_seconds, " s");
    if (report.aborted) {
        logging::error("training aborted: ", report.abort_reason);
        return 1;
    }
    return 0;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
    std::string hyp, ref, records, checkpoint, data, split = "test", out;
    int candidates = 8;
    std::optional<double> alpha;
    std::uint64_t seed = 1;
};

int cmd_eval(const EvalArgs& a) {
    const fs::path out(a.out);
    std::vector<Sentence> hyps, refs;
    std::optional<double> perplexity;
    std::optional<double> att_accuracy;
    if (!a.checkpoint.empty()) {
        if (a.data.empty()) throw UsageError("--checkpoint needs --data");
        const LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
        const PhredModel& model = *ck.model;
        const Corpus corpus = ingest_for(model, a.data);
        const auto& convs = pick_split(corpus, a.split);
        if (convs.empty()) throw std::runtime_error("split '" + a.split + "' is empty");
        perplexity = teacher_forced_perplexity(model, convs, model.noise(0.0), a.seed).perplexity;
        if (model.att()) att_accuracy = attribute_accuracy(model, convs);
        const auto records =
            generate_responses(model, convs, a.candidates, a.alpha.value_or(model.config().noise_std), a.seed);
        fs::create_directories(out);
        write_hypothesis_file(out / "hypotheses.jsonl", records);
        for (const auto& r : records) {
            hyps.push_back(tokenize(r.hypothesis));
            refs.push_back(tokenize(r.reference));
        }
    } else if (!a.records.empty()) {
        for (const auto& r : read_hypothesis_file(a.records)) {
            hyps.push_back(tokenize(r.hypothesis));
            refs.push_back(tokenize(r.reference));
        }
    } else if (!a.hyp.empty() && !a.ref.empty()) {
        hyps = read_lines(a.hyp);
        refs = read_lines(a.ref);
        if (hyps.size() != refs.size()) {
            throw std::runtime_error("hypothesis and reference files differ in line count (" +
                                     std::to_string(hyps.size()) + " vs " + std::to_string(refs.size()) + ")");
        }
    } else {
        throw UsageError("eval needs --hyp and --ref, --records, or --checkpoint and --data");
    }
    EvalReport report = evaluate_text(hyps, refs);
    report.perplexity = perplexity;
    ordered_json j = report.to_json();
    if (att_accuracy) j["attribute_accuracy"] = *att_accuracy;
    fs::create_directories(out);
    write_json(out / "eval_report.json", j);
    std::cout << j.dump(2) << '\n';
    return 0;
}

// ---- generate ---------------------------------------------------------------

struct GenerateArgs {
    std::string checkpoint, data, split = "test", out;
    int candidates = 8;
    std::optional<double> alpha;
    std::uint64_t seed = 1;
};

int cmd_generate(const GenerateArgs& a) {
    const LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
    const PhredModel& model = *ck.model;
    const Corpus corpus = ingest_for(model, a.data);
    const auto& convs = pick_split(corpus, a.split);
    const auto records =
        generate_responses(model, convs, a.candidates, a.alpha.value_or(model.config().noise_std), a.seed);
    fs::create_directories(a.out);
    write_hypothesis_file(fs::path(a.out) / "hypotheses.jsonl", records);
    logging::info("wrote ", records.size(), " responses to ", (fs::path(a.out) / "hypotheses.jsonl").string());
    return 0;
}

// ---- alpha-search -------------------------------------------------------------

struct AlphaArgs {
    std::string checkpoint, data, split = "valid", out;
    double grid_min = 1, grid_max = 30, grid_step = 1;
    std::uint64_t seed = 1;
};

int cmd_alpha_search(const AlphaArgs& a) {
    if (a.grid_step <= 0 || a.grid_max < a.grid_min) throw UsageError("empty alpha grid");
    const LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
    const PhredModel& model = *ck.model;
    if (!model.adv()) throw UsageError(std::string("alpha search needs an adversarial discriminator; variant ") +
                                       to_string(model.variant()) + " has none");
    const Corpus corpus = ingest_for(model, a.data);
    const auto& convs = pick_split(corpus, a.split);
    std::vector<double> grid;
    for (long k = 0;; ++k) {
        const double alpha = a.grid_min + static_cast<double>(k) * a.grid_step;
        if (alpha > a.grid_max + 1e-9) break;
        grid.push_back(alpha);
    }
    const AlphaSearchResult result = alpha_search(model, convs, grid, a.seed);
    ordered_json j;
    j["best_alpha"] = result.best_alpha;
    j["best_score"] = result.best_score;
    j["seed"] = a.seed;
    j["split"] = a.split;
    ordered_json rows = ordered_json::array();
    for (const auto& [alpha, score] : result.table) rows.push_back({{"alpha", alpha}, {"score", score}});
    j["table"] = rows;
    fs::create_directories(a.out);
    write_json(fs::path(a.out) / "alpha_search.json", j);
    std::ofstream tsv(fs::path(a.out) / "alpha_table.tsv", std::ios::binary);
    tsv << "alpha\tscore\n";
    for (const auto& [alpha, score] : result.table) tsv << alpha << '\t' << score << '\n';
    std::cout << "best alpha " << result.best_alpha << " (score " << result.best_score << ")\n";
    return 0;
}

// ---- synth ------------------------------------------------------------------

int cmd_synth(const SyntheticSpec& spec, const std::string& out) {
    if (spec.attributes < 2 || spec.attributes > kMaxSyntheticAttributes) {
        throw UsageError("--attributes must be in [2, " + std::to_string(kMaxSyntheticAttributes) + "]");
    }
    if (spec.signature_rate < 0 || spec.signature_rate > 1) throw UsageError("--signature-rate must be in [0, 1]");
    if (spec.conversations < 1) throw UsageError("--conversations must be positive");
    write_synthetic_corpus(out, generate_synthetic_persona_corpus(spec));
    logging::info("wrote synthetic corpus to ", out);
    return 0;
}

// ---- human-eval ---------------------------------------------------------------

int cmd_human_eval(const std::string& ranks_path, const std::string& out) {
    const json in = read_json(ranks_path);
    const json& ranks_json = in.is_array() ? in : in.at("ranks");
    const auto ranks = ranks_json.get<std::vector<std::vector<std::vector<int>>>>();
    std::vector<std::string> names;
    if (in.is_object() && in.contains("models")) names = in.at("models").get<std::vector<std::string>>();
    std::vector<HumanEvalScore> scores;
    try {
        scores = human_eval_aggregate(ranks);
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(e.what());
    }
    if (!names.empty() && names.size() != scores.size()) {
        throw std::runtime_error("models lists " + std::to_string(names.size()) + " names but ranks cover " +
                                 std::to_string(scores.size()));
    }
    ordered_json rows = ordered_json::array();
    for (std::size_t m = 0; m < scores.size(); ++m) {
        rows.push_back({{"model", names.empty() ? "model" + std::to_string(m) : names[m]},
                        {"mean", scores[m].mean},
                        {"std_error", scores[m].std_error}});
    }
    fs::create_directories(out);
    write_json(fs::path(out) / "human_eval.json", {{"models", rows}});
    std::cout << rows.dump(2) << '\n';
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Persona-conditioned hierarchical dialogue generation"};
    app.name("phred");
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train a model; writes checkpoints and reports under --out");
    train_cmd->add_option("--config", train_args.config, "Flat JSON config (unknown keys are errors)");
    train_cmd->add_option("--data", train_args.data, "Data directory or train.jsonl");
    train_cmd->add_option("--out", train_args.out, "Output directory")->required();
    train_cmd->add_option("--variant", train_args.variant, "phred, hredgan, phredgan_a or phredgan_d");
    train_cmd->add_option("--seed", train_args.seed, "Override the config seed");
    train_cmd->add_option("--epochs", train_args.epochs, "Override the config epoch count");
    train_cmd->add_option("--manifest", train_args.manifest, "Re-run from a run_manifest.json");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Score hypotheses; writes eval_report.json under --out");
    eval_cmd->add_option("--hyp", eval_args.hyp, "Hypotheses, one per line");
    eval_cmd->add_option("--ref", eval_args.ref, "References, one per line");
    eval_cmd->add_option("--records", eval_args.records, "JSON lines with hypothesis and reference fields");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Generate from this checkpoint and add perplexity");
    eval_cmd->add_option("--data", eval_args.data, "Data directory (with --checkpoint)");
    eval_cmd->add_option("--split", eval_args.split, "train, valid or test")->capture_default_str();
    eval_cmd->add_option("-L,--L,--num-candidates", eval_args.candidates, "Candidates per response")->capture_default_str();
    eval_cmd->add_option("--alpha", eval_args.alpha, "Noise level (default: training noise)");
    eval_cmd->add_option("--seed", eval_args.seed, "Generation seed")->capture_default_str();
    eval_cmd->add_option("--out", eval_args.out, "Output directory")->required();

    GenerateArgs gen_args;
    auto* gen_cmd = app.add_subcommand("generate", "Generate a response for every turn; writes hypotheses.jsonl");
    gen_cmd->add_option("--checkpoint", gen_args.checkpoint, "Checkpoint directory")->required();
    gen_cmd->add_option("--data", gen_args.data, "Data directory")->required();
    gen_cmd->add_option("--split", gen_args.split, "train, valid or test")->capture_default_str();
    gen_cmd->add_option("-L,--L,--num-candidates", gen_args.candidates, "Candidates per response")->capture_default_str();
    gen_cmd->add_option("--alpha", gen_args.alpha, "Noise level (default: training noise)");
    gen_cmd->add_option("--seed", gen_args.seed, "Generation seed")->capture_default_str();
    gen_cmd->add_option("--out", gen_args.out, "Output directory")->required();

    AlphaArgs alpha_args;
    auto* alpha_cmd = app.add_subcommand("alpha-search", "Pick the inference noise level; writes alpha_search.json");
    alpha_cmd->add_option("--checkpoint", alpha_args.checkpoint, "Checkpoint directory")->required();
    alpha_cmd->add_option("--data", alpha_args.data, "Data directory")->required();
    alpha_cmd->add_option("--split", alpha_args.split, "train, valid or test")->capture_default_str();
    alpha_cmd->add_option("--grid-min", alpha_args.grid_min, "First alpha")->capture_default_str();
    alpha_cmd->add_option("--grid-max", alpha_args.grid_max, "Last alpha")->capture_default_str();
    alpha_cmd->add_option("--grid-step", alpha_args.grid_step, "Alpha increment")->capture_default_str();
    alpha_cmd->add_option("--seed", alpha_args.seed, "Noise seed")->capture_default_str();
    alpha_cmd->add_option("--out", alpha_args.out, "Output directory")->required();

    SyntheticSpec synth_spec;
    std::string synth_out;
    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic persona corpus");
    synth_cmd->add_option("--conversations", synth_spec.conversations, "Conversation count")->capture_default_str();
    synth_cmd->add_option("--attributes", synth_spec.attributes, "Persona count")->capture_default_str();
    synth_cmd->add_option("--signature-rate", synth_spec.signature_rate, "Chance a token is a persona signature")
        ->capture_default_str();
    synth_cmd->add_option("--seed", synth_spec.seed, "Seed")->capture_default_str();
    synth_cmd->add_option("--out", synth_out, "Output directory")->required();

    std::string ranks_path, human_out;
    auto* human_cmd = app.add_subcommand("human-eval", "Aggregate human rank judgements");
    human_cmd->add_option("--ranks", ranks_path, "JSON {models?, ranks[sample][judge][model]}")->required();
    human_cmd->add_option("--out", human_out, "Output directory")->required();

    ServiceOptions serve_opts;
    std::string seed_mode = "fixed", host = "127.0.0.1", persist, ui_dir;
    int port = 8080;
    std::optional<double> serve_alpha;
    auto* serve_cmd = app.add_subcommand("serve", "Run the chat service");
    serve_cmd->add_option("--port", port, "TCP port")->capture_default_str();
    serve_cmd->add_option("--host", host, "Bind address")->capture_default_str();
    serve_cmd->add_option("--snapshot-dir", serve_opts.snapshot_dir, "Directory of checkpoints")->required();
    serve_cmd->add_option("--persist", persist, "Append transcripts as JSON lines here");
    serve_cmd->add_option("--seed-mode", seed_mode, "fixed or entropy")->capture_default_str();
    serve_cmd->add_option("--alpha", serve_alpha, "Noise level (default: training noise)");
    serve_cmd->add_option("--ui-dir", ui_dir, "Serve these static files under /ui");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*train_cmd) return cmd_train(train_args);
        if (*eval_cmd) return cmd_eval(eval_args);
        if (*gen_cmd) return cmd_generate(gen_args);
        if (*alpha_cmd) return cmd_alpha_search(alpha_args);
        if (*synth_cmd) return cmd_synth(synth_spec, synth_out);
        if (*human_cmd) return cmd_human_eval(ranks_path, human_out);
        if (*serve_cmd) {
            serve_opts.seed_mode = parse_seed_mode(seed_mode);
            if (!persist.empty()) serve_opts.persist_dir = persist;
            if (!ui_dir.empty()) serve_opts.ui_dir = ui_dir;
            serve_opts.alpha = serve_alpha;
            return serve(serve_opts, host, port);
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace phred
