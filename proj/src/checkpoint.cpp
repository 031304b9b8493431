#include "recfill/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <map>

#include "json.hpp"

namespace recfill {

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'R', 'S', 'L', 'M'};
constexpr std::uint32_t kVersion = 1;

template <typename V>
void put(std::string& out, V value) {
    char buf[sizeof(V)];
    std::memcpy(buf, &value, sizeof(V));
    out.append(buf, sizeof(V));
}

template <typename V>
V take(const std::string& in, std::size_t& off) {
    if (off + sizeof(V) > in.size()) throw DataError("truncated checkpoint");
    V value;
    std::memcpy(&value, in.data() + off, sizeof(V));
    off += sizeof(V);
    return value;
}

std::string config_record(const Net<float>& net) {
    const ModelConfig& c = net.config();
    nlohmann::ordered_json j;
    j["vocab_size"] = c.vocab_size;
    j["d_model"] = c.d_model;
    j["n_layers"] = c.n_layers;
    j["n_heads"] = c.n_heads;
    j["ffn_mult"] = c.ffn_mult;
    j["max_len"] = c.max_len;
    j["dropout"] = c.dropout;
    j["seed"] = c.seed;
    j["lora_rank"] = net.lora_rank();
    j["lora_alpha"] = net.lora_alpha();
    j["lora_only"] = net.lora_only();
    return j.dump();
}

}  // namespace

void save_checkpoint(const Net<float>& net, const std::string& path) {
    std::string out;
    out.append(kMagic, 4);
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, std::uint32_t(net.tensor_count()));
    for (std::size_t i = 0; i < net.tensor_count(); ++i) {
        const Tensor<float>& t = net.tensor_at(i);
        if (t.name.size() > 0xffff) throw DataError("tensor name too long: " + t.name);
        put<std::uint16_t>(out, std::uint16_t(t.name.size()));
        out.append(t.name);
        put<std::uint8_t>(out, 0);  // float32
        put<std::uint8_t>(out, std::uint8_t(t.rank));
        if (t.rank == 1) {
            put<std::uint64_t>(out, std::uint64_t(t.value.cols()));
        } else {
            put<std::uint64_t>(out, std::uint64_t(t.value.rows()));
            put<std::uint64_t>(out, std::uint64_t(t.value.cols()));
        }
        out.append(reinterpret_cast<const char*>(t.value.data()),
                   std::size_t(t.value.size()) * sizeof(float));
    }
    std::string record = config_record(net);
    put<std::uint32_t>(out, std::uint32_t(record.size()));
    out.append(record);
    write_file_atomic(path, out);
}

Net<float> load_checkpoint(const std::string& path) {
    std::string in = read_file(path);
    std::size_t off = 0;
    if (in.size() < 4 || std::memcmp(in.data(), kMagic, 4) != 0)
        throw DataError("not a checkpoint file: " + path);
    off = 4;
    auto version = take<std::uint32_t>(in, off);
    if (version != kVersion)
        throw DataError("unsupported checkpoint version: " + std::to_string(version));
    auto tensor_count = take<std::uint32_t>(in, off);

    struct Stored {
        int rank;
        std::vector<std::uint64_t> dims;
        std::size_t data_off;
        std::size_t count;
    };
    std::map<std::string, Stored> stored;
    for (std::uint32_t i = 0; i < tensor_count; ++i) {
        auto name_len = take<std::uint16_t>(in, off);
        if (off + name_len > in.size()) throw DataError("truncated checkpoint");
        std::string name = in.substr(off, name_len);
        off += name_len;
        auto dtype = take<std::uint8_t>(in, off);
        if (dtype != 0) throw DataError("unsupported dtype in tensor " + name);
        auto rank = take<std::uint8_t>(in, off);
        if (rank < 1 || rank > 2) throw DataError("unsupported rank in tensor " + name);
        Stored s;
        s.rank = rank;
        std::size_t count = 1;
        for (int r = 0; r < rank; ++r) {
            s.dims.push_back(take<std::uint64_t>(in, off));
            count *= std::size_t(s.dims.back());
        }
        s.data_off = off;
        s.count = count;
        if (off + count * sizeof(float) > in.size()) throw DataError("truncated checkpoint");
        off += count * sizeof(float);
        if (!stored.emplace(std::move(name), std::move(s)).second)
            throw DataError("duplicate tensor in checkpoint");
    }
    auto record_len = take<std::uint32_t>(in, off);
    if (off + record_len > in.size()) throw DataError("truncated checkpoint");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in.substr(off, record_len));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad checkpoint config record: ") + e.what());
    }

    ModelConfig cfg;
    cfg.vocab_size = j.at("vocab_size").get<int>();
    cfg.d_model = j.at("d_model").get<int>();
    cfg.n_layers = j.at("n_layers").get<int>();
    cfg.n_heads = j.at("n_heads").get<int>();
    cfg.ffn_mult = j.at("ffn_mult").get<int>();
    cfg.max_len = j.at("max_len").get<int>();
    cfg.dropout = j.at("dropout").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    Net<float> net(cfg);
    int lora_rank = j.at("lora_rank").get<int>();
    if (lora_rank > 0) net.attach_lora(lora_rank, j.at("lora_alpha").get<double>());
    net.set_lora_only(j.at("lora_only").get<bool>());

    if (stored.size() != net.tensor_count())
        throw DataError("checkpoint tensor count mismatch: " + std::to_string(stored.size()) +
                        " vs " + std::to_string(net.tensor_count()));
    for (std::size_t i = 0; i < net.tensor_count(); ++i) {
        Tensor<float>& t = net.tensor_at(i);
        auto it = stored.find(t.name);
        if (it == stored.end()) throw DataError("checkpoint missing tensor: " + t.name);
        const Stored& s = it->second;
        bool shape_ok =
            s.rank == t.rank &&
            (t.rank == 1 ? long(s.dims[0]) == t.value.cols()
                         : long(s.dims[0]) == t.value.rows() && long(s.dims[1]) == t.value.cols());
        if (!shape_ok) throw DataError("checkpoint shape mismatch for tensor: " + t.name);
        std::memcpy(t.value.data(), in.data() + s.data_off, s.count * sizeof(float));
    }
    return net;
}

}  // namespace recfill
