#include "recfill/pipeline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "recfill/checkpoint.hpp"
#include "recfill/decoder.hpp"
#include "recfill/optim.hpp"

namespace recfill {

namespace {

struct WallTimer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

std::string manifest_path(const RunConfig& config, const std::string& command) {
    return config.paths.out_dir + "/" + command + ".manifest.json";
}

void write_manifest(const RunConfig& config, const std::string& command,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, double wall_seconds) {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["config_hash"] = to_hex(fnv1a64(serialize_config(config)));
    j["seed"] = config.seed;
    nlohmann::ordered_json in = nlohmann::ordered_json::object();
    for (const auto& p : inputs) in[p] = file_digest_hex(p);
    j["inputs"] = in;
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& p : outputs) out[p] = file_digest_hex(p);
    j["outputs"] = out;
    j["versions"] = {{"recfill", "1.0.0"}, {"checkpoint_format", 1}};
    j["wall_clock_seconds"] = wall_seconds;
    std::filesystem::create_directories(config.paths.out_dir);
    write_file_atomic(manifest_path(config, command), j.dump(2) + "\n");
}

void require_path(const std::string& value, const char* key) {
    if (value.empty()) throw ConfigError(std::string("missing required path: ") + key);
}

std::vector<Document> split_docs(std::vector<Document>&& docs, const std::string& split) {
    std::vector<Document> out;
    for (auto& d : docs)
        if (d.split == split) out.push_back(std::move(d));
    return out;
}

// Eval caps keep desk-scale runs bounded: first `max_cases` docs per task
// family in doc-id order (deterministic because the corpus is sorted).
std::vector<Document> cap_per_family(std::vector<Document> docs, int max_cases) {
    if (max_cases <= 0) return docs;
    std::vector<std::size_t> taken(kNumFamilies, 0);
    std::vector<Document> out;
    for (auto& d : docs)
        if (taken[std::size_t(d.family)]++ < std::size_t(max_cases)) out.push_back(std::move(d));
    return out;
}

ModelConfig model_config_for(const RunConfig& config, const Vocabulary& vocab) {
    ModelConfig mc = config.model;
    mc.vocab_size = int(vocab.size());
    mc.max_len = int(config.train.max_len);
    mc.seed = config.seed;
    return mc;
}

}  // namespace

std::string position_dump(const PositionedExample& ex, const Vocabulary& vocab) {
    std::vector<std::array<std::string, 5>> rows;
    rows.push_back({"token", "inter", "intra", "part", "target"});
    for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
        std::array<std::string, 5> row;
        row[0] = vocab.id_to_token(ex.tokens[i]);
        row[1] = std::to_string(ex.inter_ids[i]);
        row[2] = std::to_string(ex.intra_ids[i]);
        row[3] = i < ex.part_a_len ? "A" : "B";
        row[4] = ex.targets[i] < 0 ? "-" : vocab.id_to_token(ex.targets[i]);
        rows.push_back(row);
    }
    std::array<std::size_t, 5> width{};
    for (const auto& row : rows)
        for (std::size_t c = 0; c < 5; ++c) width[c] = std::max(width[c], row[c].size());
    std::string out;
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < 5; ++c) {
            if (c) out += "  ";
            out += row[c];
            if (c + 1 < 5) out.append(width[c] - row[c].size(), ' ');
        }
        out += '\n';
    }
    return out;
}

FixtureBundle position_fixture() {
    FixtureBundle fb{Vocabulary::build({"x1 x2 x3 x4 x5 x6 x7"}), EntityPool{}, Document{},
                     PositionedExample{}};
    EntityId e1 = fb.pool.register_entity(fb.vocab.encode("x1 x2 x3"), "x1 x2 x3",
                                          EntityKind::item);
    EntityId e2 = fb.pool.register_entity(fb.vocab.encode("x6 x7"), "x6 x7", EntityKind::item);
    fb.doc.doc_id = "fixture";
    fb.doc.text = "x1 x2 x3 x4 x5 x6 x7";
    fb.doc.tokens = fb.vocab.encode(fb.doc.text);
    fb.doc.entity_spans = {{0, 3, e1}, {5, 2, e2}};
    fb.doc.split = "eval";
    fb.doc.target_start = 0;
    fb.doc.target_len = 3;
    CorruptedExample ex =
        corrupt(fb.doc, {{0, 3, MaskLevel::entity}, {4, 1, MaskLevel::entity}},
                MaskLevel::entity);
    fb.positioned = assign_positions(ex, fb.pool);
    return fb;
}

std::string cmd_gen_world(const RunConfig& config, const WorldSpec& spec,
                          const std::string& truth_out) {
    WallTimer timer;
    require_path(config.paths.interactions, "paths.interactions");
    WorldTruth truth = generate_world(spec, config.paths.interactions, truth_out);
    write_manifest(config, "gen-world", {}, {config.paths.interactions, truth_out},
                   timer.seconds());
    std::ostringstream out;
    out << "world: catalog=" << truth.catalog << " users=" << spec.users
        << " interactions_per_user=" << spec.interactions_per_user
        << " epsilon=" << format_double(truth.epsilon)
        << " bayes_hr1=" << format_double(1.0 - truth.epsilon + truth.epsilon / truth.catalog);
    return out.str();
}

std::string cmd_ingest(const RunConfig& config) {
    WallTimer timer;
    require_path(config.paths.interactions, "paths.interactions");
    require_path(config.paths.vocab, "paths.vocab");
    require_path(config.paths.entities, "paths.entities");
    auto records = parse_interactions(config.paths.interactions);
    // User identifiers stay out of the vocabulary on purpose: they are
    // singleton tokens with no reusable signal at this scale and encode as
    // [UNK]. Titles, reviews and template words all get real ids.
    std::vector<std::string> lines = template_word_lines();
    for (const auto& r : records) {
        lines.push_back(Vocabulary::normalize(r.item_title));
        if (!r.review.empty()) lines.push_back(Vocabulary::normalize(r.review));
    }
    Vocabulary vocab = Vocabulary::build(lines);
    EntityPool pool;
    IngestResult result = ingest(config.paths.interactions, vocab, pool);
    vocab.save(config.paths.vocab);
    pool.save(config.paths.entities);
    write_manifest(config, "ingest", {config.paths.interactions},
                   {config.paths.vocab, config.paths.entities}, timer.seconds());
    std::ostringstream out;
    out << "ingest: records=" << result.records << " users=" << result.histories.size()
        << " entities=" << pool.size() << " vocab=" << vocab.size();
    return out.str();
}

std::string cmd_build_corpus(const RunConfig& config) {
    WallTimer timer;
    require_path(config.paths.interactions, "paths.interactions");
    require_path(config.paths.vocab, "paths.vocab");
    require_path(config.paths.entities, "paths.entities");
    require_path(config.paths.corpus, "paths.corpus");
    Vocabulary vocab = Vocabulary::load(config.paths.vocab);
    EntityPool pool = EntityPool::load(config.paths.entities, vocab);
    std::size_t known = pool.size();
    IngestResult result = ingest(config.paths.interactions, vocab, pool);
    if (pool.size() != known)
        throw DataError("interactions contain items missing from the entity pool; rerun ingest");
    CorpusStats stats = build_corpus(result.histories, vocab, pool, config.sample, config.seed,
                                     config.paths.corpus);
    write_manifest(config, "build-corpus",
                   {config.paths.interactions, config.paths.vocab, config.paths.entities},
                   {config.paths.corpus}, timer.seconds());
    std::ostringstream out;
    out << "corpus: train_docs=" << stats.train_docs << " eval_docs=" << stats.eval_docs
        << " skipped_users=" << stats.skipped_users
        << " family_substitutions=" << stats.family_substitutions;
    return out.str();
}

Net<float> train_model(const RunConfig& config, const std::vector<Document>& train_docs,
                       const Vocabulary& vocab, const EntityPool& pool, std::string& trace) {
    if (train_docs.empty()) throw DataError("no training documents in corpus");
    Net<float> net(model_config_for(config, vocab));
    if (config.lora.enabled && config.lora.rank > 0)
        net.attach_lora(config.lora.rank, config.lora.alpha);
    if (config.lora.only) net.set_lora_only(true);
    auto optim = OptimState<float>::init(net, config.train.peak_lr, config.train.warmup_steps,
                                         config.train.weight_decay);
    auto grads = net.zero_grads();
    Rng dropout_rng(derive_seed(config.seed, "dropout", 0));
    Rng* drop = config.model.dropout > 0.0 ? &dropout_rng : nullptr;

    // Masked length is bounded by 3n + 2 (every unit masked as its own span),
    // so this filter guarantees assign_positions never rejects mid-epoch.
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < train_docs.size(); ++i)
        if (3 * train_docs[i].tokens.size() + 2 <= config.train.max_len) usable.push_back(i);
    if (usable.empty()) throw DataError("every training document exceeds train.max_len");

    long step = 0;
    for (int epoch = 0; epoch < config.train.epochs; ++epoch) {
        std::vector<std::size_t> order = usable;
        Rng order_rng(derive_seed(config.seed, "epoch-order", std::uint64_t(epoch)));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[order_rng.next_below(i)]);
        std::uint64_t epoch_seed = derive_seed(config.seed, "epoch-mask", std::uint64_t(epoch));
        std::vector<PositionedExample> batch;
        auto flush = [&] {
            if (batch.empty()) return;
            for (auto& g : grads.g) g.setZero();
            double lr = schedule(optim.step + 1, optim.peak_lr, optim.warmup_steps);
            double loss = net.loss_and_grads(batch, grads, drop);
            if (!std::isfinite(loss))
                throw NumericError("non-finite loss at step " + std::to_string(step));
            adamw_step(net, grads, optim);
            trace += std::to_string(step) + "\t" + std::to_string(epoch) + "\t" +
                     format_double(loss) + "\t" + format_double(lr) + "\n";
            ++step;
            batch.clear();
        };
        for (std::size_t idx : order) {
            const Document& doc = train_docs[idx];
            Rng mask_rng(derive_seed(epoch_seed, "mask", fnv1a64(doc.doc_id)));
            CorruptedExample ex =
                mask_example(doc, vocab, config.mask, config.train.target_mask_prob, mask_rng);
            batch.push_back(assign_positions(ex, pool, config.train.max_len));
            if (batch.size() == std::size_t(config.train.batch_size)) flush();
        }
        flush();  // trailing partial batch
    }
    return net;
}

std::string cmd_pretrain(const RunConfig& config) {
    WallTimer timer;
    require_path(config.paths.vocab, "paths.vocab");
    require_path(config.paths.entities, "paths.entities");
    require_path(config.paths.corpus, "paths.corpus");
    require_path(config.paths.model, "paths.model");
    Vocabulary vocab = Vocabulary::load(config.paths.vocab);
    EntityPool pool = EntityPool::load(config.paths.entities, vocab);
    auto train_docs = split_docs(load_corpus(config.paths.corpus, vocab), "train");
    std::string trace;
    Net<float> net = train_model(config, train_docs, vocab, pool, trace);
    save_checkpoint(net, config.paths.model);
    std::string trace_path = config.paths.model + ".trace.tsv";
    write_file_atomic(trace_path, trace);
    write_manifest(config, "pretrain",
                   {config.paths.corpus, config.paths.vocab, config.paths.entities},
                   {config.paths.model, trace_path}, timer.seconds());
    double first = 0.0, last = 0.0;
    std::size_t steps = 0;
    std::istringstream in(trace);
    for (std::string line; std::getline(in, line); ++steps) {
        auto fields = split_char(line, '\t');
        last = std::stod(fields[2]);
        if (steps == 0) first = last;
    }
    std::ostringstream out;
    out << "pretrain: docs=" << train_docs.size() << " steps=" << steps
        << " first_loss=" << format_double(first) << " last_loss=" << format_double(last);
    return out.str();
}

std::string cmd_generate(const RunConfig& config, const std::string& doc_id, bool constrained,
                         const std::string& out_path) {
    WallTimer timer;
    require_path(config.paths.vocab, "paths.vocab");
    require_path(config.paths.entities, "paths.entities");
    require_path(config.paths.corpus, "paths.corpus");
    require_path(config.paths.model, "paths.model");
    Vocabulary vocab = Vocabulary::load(config.paths.vocab);
    EntityPool pool = EntityPool::load(config.paths.entities, vocab);
    auto docs = load_corpus(config.paths.corpus, vocab);
    const Document* doc = nullptr;
    for (const auto& d : docs)
        if (d.doc_id == doc_id) doc = &d;
    if (!doc) throw DataError("doc_id not in corpus: " + doc_id);
    Net<float> net = load_checkpoint(config.paths.model);

    CorruptedExample ex = corrupt_target(*doc);
    DecodeConfig dc;
    dc.max_steps = config.eval.max_steps;
    dc.constrain_entities = constrained;
    dc.single_entity =
        doc->family == TaskFamily::sequential || doc->family == TaskFamily::direct;
    dc.seed = config.seed;
    DecodeResult result = infill(net, ex.part_a, pool, dc);

    nlohmann::ordered_json j;
    j["doc_id"] = doc_id;
    j["prompt"] = vocab.decode(ex.part_a);
    nlohmann::ordered_json slots = nlohmann::ordered_json::array();
    std::ostringstream out;
    out << "prompt: " << vocab.decode(ex.part_a) << "\n";
    for (const auto& slot : result.slots) {
        nlohmann::ordered_json s;
        s["mask_pos"] = slot.mask_pos;
        s["text"] = vocab.decode(slot.tokens);
        s["total_logp"] = slot.total_logp;
        s["truncated"] = slot.truncated;
        slots.push_back(std::move(s));
        out << "slot@" << slot.mask_pos << ": " << vocab.decode(slot.tokens)
            << "  (logp " << format_double(slot.total_logp) << ")\n";
    }
    j["slots"] = std::move(slots);
    std::vector<std::string> outputs;
    if (!out_path.empty()) {
        write_file_atomic(out_path, j.dump(2) + "\n");
        outputs.push_back(out_path);
    }
    write_manifest(config, "generate",
                   {config.paths.corpus, config.paths.model, config.paths.vocab,
                    config.paths.entities},
                   outputs, timer.seconds());
    std::string text = out.str();
    text.pop_back();  // summary has no trailing newline
    return text;
}

std::string cmd_evaluate(const RunConfig& config, const std::string& report_out) {
    WallTimer timer;
    require_path(config.paths.vocab, "paths.vocab");
    require_path(config.paths.entities, "paths.entities");
    require_path(config.paths.corpus, "paths.corpus");
    require_path(config.paths.model, "paths.model");
    Vocabulary vocab = Vocabulary::load(config.paths.vocab);
    EntityPool pool = EntityPool::load(config.paths.entities, vocab);
    auto eval_docs = cap_per_family(split_docs(load_corpus(config.paths.corpus, vocab), "eval"),
                                    config.eval.max_cases);
    if (eval_docs.empty()) throw DataError("no eval documents in corpus");
    Net<float> net = load_checkpoint(config.paths.model);
    EvalConfig ec;
    ec.beam = config.eval.beam;
    ec.negatives = config.eval.negatives;
    ec.max_steps = config.eval.max_steps;
    ec.seed = config.seed;
    auto outputs = run_eval_model(net, eval_docs, pool, vocab, ec);
    auto reports = evaluate(eval_docs, outputs, vocab, pool);
    write_file_atomic(report_out, report_to_tsv(reports));
    write_manifest(config, "evaluate",
                   {config.paths.corpus, config.paths.model, config.paths.vocab,
                    config.paths.entities},
                   {report_out}, timer.seconds());
    return report_summary(reports);
}

std::string cmd_inspect_example(const RunConfig& config, const std::string& doc_id,
                                bool fixture) {
    if (fixture) {
        FixtureBundle fb = position_fixture();
        return position_dump(fb.positioned, fb.vocab);
    }
    require_path(config.paths.vocab, "paths.vocab");
    require_path(config.paths.entities, "paths.entities");
    require_path(config.paths.corpus, "paths.corpus");
    Vocabulary vocab = Vocabulary::load(config.paths.vocab);
    EntityPool pool = EntityPool::load(config.paths.entities, vocab);
    auto docs = load_corpus(config.paths.corpus, vocab);
    for (const auto& d : docs) {
        if (d.doc_id != doc_id) continue;
        PositionedExample ex = assign_positions(corrupt_target(d), pool, config.train.max_len);
        return position_dump(ex, vocab);
    }
    throw DataError("doc_id not in corpus: " + doc_id);
}

double sequential_hr1(const Net<float>& net, const std::vector<Document>& eval_docs,
                      const EntityPool& pool, const EvalKnobs& knobs) {
    std::size_t cases = 0, hits = 0;
    std::size_t taken = 0;
    for (const auto& doc : eval_docs) {
        if (doc.family != TaskFamily::sequential) continue;
        if (knobs.max_cases > 0 && taken >= std::size_t(knobs.max_cases)) break;
        ++taken;
        auto ranked = next_item_predict(net, doc, pool, knobs.beam, knobs.max_steps);
        ++cases;
        if (!ranked.empty() && ranked.front().first == target_entity(doc)) ++hits;
    }
    if (cases == 0) throw DataError("no sequential eval documents");
    return double(hits) / double(cases);
}

std::string cmd_ablate_rank(const RunConfig& config, const std::string& report_out) {
    WallTimer timer;
    require_path(config.paths.vocab, "paths.vocab");
    require_path(config.paths.entities, "paths.entities");
    require_path(config.paths.corpus, "paths.corpus");
    Vocabulary vocab = Vocabulary::load(config.paths.vocab);
    EntityPool pool = EntityPool::load(config.paths.entities, vocab);
    auto docs = load_corpus(config.paths.corpus, vocab);
    auto train_docs = split_docs(std::vector<Document>(docs), "train");
    auto eval_docs = split_docs(std::move(docs), "eval");

    std::string report = "rank\thr@1\tfinal_loss\tadapter_params\n";
    std::ostringstream summary;
    summary << "ablate-rank:";
    for (int rank : {2, 4, 8, 16, 32}) {
        RunConfig rc = config;
        rc.lora.enabled = true;
        rc.lora.rank = rank;
        std::string trace;
        Net<float> net = train_model(rc, train_docs, vocab, pool, trace);
        double final_loss = 0.0;
        std::istringstream in(trace);
        for (std::string line; std::getline(in, line);)
            final_loss = std::stod(split_char(line, '\t')[2]);
        std::size_t adapter = 0;
        for (std::size_t i = 0; i < net.tensor_count(); ++i)
            if (net.tensor_at(i).name.rfind("lora.", 0) == 0)
                adapter += std::size_t(net.tensor_at(i).value.size());
        double hr1 = sequential_hr1(net, eval_docs, pool, config.eval);
        report += std::to_string(rank) + "\t" + format_double(hr1) + "\t" +
                  format_double(final_loss) + "\t" + std::to_string(adapter) + "\n";
        summary << " r" << rank << "=" << format_double(hr1);
    }
    write_file_atomic(report_out, report);
    write_manifest(config, "ablate-rank",
                   {config.paths.corpus, config.paths.vocab, config.paths.entities},
                   {report_out}, timer.seconds());
    return summary.str();
}

}  // namespace recfill
