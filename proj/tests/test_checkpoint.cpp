#include <cstring>
#include <filesystem>

#include "doctest.h"
#include "recfill/checkpoint.hpp"
#include "support.hpp"

using namespace recfill;
using testsupport::tiny_world;
using testsupport::positioned_batch;

namespace {

std::string tmp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

Net<float> sample_net(bool with_lora) {
    auto w = tiny_world(1, 9);
    ModelConfig cfg;
    cfg.vocab_size = int(w.vocab.size());
    cfg.d_model = 8;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.max_len = 48;
    cfg.dropout = 0.0;
    cfg.seed = 21;
    Net<float> net(cfg);
    if (with_lora) {
        net.attach_lora(2, 4.0);
        net.set_lora_only(true);
        Rng rng(5);
        for (std::size_t i = 0; i < net.tensor_count(); ++i) {
            auto& t = net.tensor_at(i);
            if (t.name.rfind("lora.", 0) == 0)
                for (long k = 0; k < t.value.size(); ++k)
                    t.value.data()[k] = float(rng.next_normal() * 0.03);
        }
    }
    return net;
}

}  // namespace

TEST_CASE("round trip restores every tensor bit for bit") {
    for (bool with_lora : {false, true}) {
        Net<float> net = sample_net(with_lora);
        auto path = tmp_path("recfill_ckpt.bin");
        save_checkpoint(net, path);
        Net<float> back = load_checkpoint(path);

        CHECK(back.tensor_count() == net.tensor_count());
        for (std::size_t i = 0; i < net.tensor_count(); ++i) {
            const auto& a = net.tensor_at(i);
            const auto& b = back.tensor_at(i);
            CHECK(a.name == b.name);
            CHECK(a.rank == b.rank);
            CHECK(a.value == b.value);
            CHECK(a.trainable == b.trainable);
        }
        CHECK(back.config().vocab_size == net.config().vocab_size);
        CHECK(back.config().seed == net.config().seed);
        CHECK(back.lora_rank() == net.lora_rank());
        CHECK(back.lora_alpha() == net.lora_alpha());
        CHECK(back.lora_only() == net.lora_only());

        // save-load-save produces identical bytes
        auto path2 = tmp_path("recfill_ckpt2.bin");
        save_checkpoint(back, path2);
        CHECK(read_file(path) == read_file(path2));
        std::filesystem::remove(path);
        std::filesystem::remove(path2);
    }
}

TEST_CASE("restored model computes identical logits") {
    auto w = tiny_world(2, 10);
    Net<float> net = sample_net(true);
    auto batch = positioned_batch(w, 2, 12);
    auto path = tmp_path("recfill_ckpt3.bin");
    save_checkpoint(net, path);
    Net<float> back = load_checkpoint(path);
    for (const auto& ex : batch) CHECK(net.forward(ex) == back.forward(ex));
    std::filesystem::remove(path);
}

TEST_CASE("container layout starts with magic, version, tensor count") {
    Net<float> net = sample_net(false);
    auto path = tmp_path("recfill_ckpt4.bin");
    save_checkpoint(net, path);
    std::string bytes = read_file(path);
    REQUIRE(bytes.size() > 12);
    CHECK(bytes.compare(0, 4, "RSLM") == 0);
    std::uint32_t version = 0, count = 0;
    std::memcpy(&version, bytes.data() + 4, 4);
    std::memcpy(&count, bytes.data() + 8, 4);
    CHECK(version == 1);
    CHECK(count == net.tensor_count());
    // first tensor record: u16 name length then the name itself
    std::uint16_t name_len = 0;
    std::memcpy(&name_len, bytes.data() + 12, 2);
    CHECK(bytes.substr(14, name_len) == net.tensor_at(0).name);
    std::filesystem::remove(path);
}

TEST_CASE("corrupt files are rejected with precise errors") {
    Net<float> net = sample_net(false);
    auto path = tmp_path("recfill_ckpt5.bin");
    save_checkpoint(net, path);
    std::string good = read_file(path);

    auto expect_error = [&](std::string bytes, const char* needle) {
        write_file_atomic(path, bytes);
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains(needle), DataError);
    };

    expect_error("XXXX" + good.substr(4), "not a checkpoint");
    expect_error(good.substr(0, 3), "not a checkpoint");
    {
        std::string bad = good;
        bad[4] = 9;  // version
        expect_error(bad, "unsupported checkpoint version");
    }
    expect_error(good.substr(0, good.size() / 2), "truncated checkpoint");
    {
        std::string bad = good;
        bad[14 + 2] = 'x';  // mangle the first tensor's name in place
        expect_error(bad, "missing tensor");
    }
    {
        std::string bad = good;
        bad[12 + 2 + net.tensor_at(0).name.size()] = 1;  // dtype byte
        expect_error(bad, "unsupported dtype");
    }
    std::filesystem::remove(path);
}

TEST_CASE("shape mismatches are named") {
    Net<float> net = sample_net(false);
    auto path = tmp_path("recfill_ckpt6.bin");
    save_checkpoint(net, path);
    std::string bytes = read_file(path);
    // Rewrite vocab_size in the trailing config record (same byte length), so
    // the rebuilt model disagrees with the stored token-table shape.
    std::string needle = "\"vocab_size\":11";
    auto pos = bytes.rfind(needle);
    REQUIRE(pos != std::string::npos);
    bytes.replace(pos, needle.size(), "\"vocab_size\":12");
    write_file_atomic(path, bytes);
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("embedding.token"), DataError);
    std::filesystem::remove(path);
}
