#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "fedbkd/distill.hpp"
#include "fedbkd/errors.hpp"
#include "fedbkd/generator.hpp"
#include "fedbkd/model.hpp"
#include "fedbkd/rng.hpp"

using namespace fedbkd;

namespace {

const Architecture kArch = Architecture::classifier(8, 4);

SyntheticBatch random_batch(std::size_t n, std::size_t d, std::uint64_t seed,
                            const LayeredModel& labeler) {
    SyntheticBatch b;
    b.inputs = Matrix(n, d);
    Rng rng(seed);
    for (double& v : b.inputs.data) v = rng.normal();
    b.pseudo_labels = pseudo_labels(labeler, b.inputs);
    return b;
}

std::uint64_t head_hash(const LayeredModel& m) {
    std::uint64_t h = 1469598103934665603ull;
    for (const std::string& key : m.partition.classification_keys) {
        const Tensor& t = m.params.entries.at(key);
        for (double v : t.values) {
            std::uint64_t bits;
            static_assert(sizeof(bits) == sizeof(v));
            __builtin_memcpy(&bits, &v, sizeof(bits));
            h = (h ^ bits) * 1099511628211ull;
        }
    }
    return h;
}

} // namespace

TEST_CASE("g2l: student equal to teacher stays bit-identical at zero KL") {
    LayeredModel global = LayeredModel::init(kArch, 1);
    LayeredModel client = global;
    SyntheticBatch batch = random_batch(40, 8, 2, global);

    DistillConfig cfg;
    double kl = -1.0;
    LayeredModel out = distill_global_to_local(client, global, batch, cfg, &kl);
    CHECK(kl < 1e-9);
    CHECK(out.params.bit_equal(client.params));
}

TEST_CASE("g2l: one epoch never increases the student-teacher KL") {
    LayeredModel global = LayeredModel::init(kArch, 3);
    LayeredModel client = LayeredModel::init(kArch, 4);
    SyntheticBatch batch = random_batch(64, 8, 5, global);

    const double before = kl_divergence(forward(client, batch.inputs),
                                        forward(global, batch.inputs));
    DistillConfig cfg;
    cfg.epochs_global_to_local = 1;
    double after = -1.0;
    distill_global_to_local(client, global, batch, cfg, &after);
    CHECK(after <= before);
    CHECK(after < before); // random init pair is never already optimal
}

TEST_CASE("g2l: more epochs keep shrinking the KL") {
    LayeredModel global = LayeredModel::init(kArch, 6);
    LayeredModel client = LayeredModel::init(kArch, 7);
    SyntheticBatch batch = random_batch(64, 8, 8, global);

    DistillConfig one;
    one.epochs_global_to_local = 1;
    DistillConfig four;
    four.epochs_global_to_local = 4;
    double kl_one = -1.0, kl_four = -1.0;
    distill_global_to_local(client, global, batch, one, &kl_one);
    distill_global_to_local(client, global, batch, four, &kl_four);
    CHECK(kl_four < kl_one);
}

TEST_CASE("g2l: student head frozen, teacher untouched") {
    LayeredModel global = LayeredModel::init(kArch, 9);
    LayeredModel client = LayeredModel::init(kArch, 10);
    SyntheticBatch batch = random_batch(48, 8, 11, global);

    const std::uint64_t client_head = head_hash(client);
    const std::uint64_t global_hash = global.params.content_hash();

    DistillConfig cfg;
    LayeredModel out = distill_global_to_local(client, global, batch, cfg);

    CHECK(head_hash(out) == client_head);
    CHECK(global.params.content_hash() == global_hash);
    bool rep_changed = false;
    for (const std::string& key : out.partition.representation_keys)
        rep_changed = rep_changed ||
                      out.params.entries.at(key).values != client.params.entries.at(key).values;
    CHECK(rep_changed);
}

TEST_CASE("g2l: rejects mismatched architectures and empty batches") {
    LayeredModel global = LayeredModel::init(kArch, 12);
    LayeredModel other = LayeredModel::init(Architecture::classifier(8, 5), 13);
    SyntheticBatch batch = random_batch(16, 8, 14, global);
    DistillConfig cfg;
    CHECK_THROWS_AS(distill_global_to_local(other, global, batch, cfg), InputError);

    SyntheticBatch empty;
    CHECK_THROWS_AS(distill_global_to_local(global, global, empty, cfg), InputError);
}

TEST_CASE("l2g: single client equal to global leaves it bit-identical") {
    LayeredModel global = LayeredModel::init(kArch, 15);
    LayeredModel teacher = global;
    SyntheticBatch batch = random_batch(32, 8, 16, global);

    std::vector<DistillPair> pairs = {{&teacher, &batch}};
    DistillConfig cfg;
    double kl = -1.0;
    LayeredModel out = distill_local_to_global(global, pairs, cfg, 0, &kl);
    CHECK(kl < 1e-9);
    CHECK(out.params.bit_equal(global.params));
}

TEST_CASE("l2g: global head frozen, teachers untouched, KL shrinks") {
    LayeredModel global = LayeredModel::init(kArch, 17);
    LayeredModel t1 = LayeredModel::init(kArch, 18);
    LayeredModel t2 = LayeredModel::init(kArch, 19);
    SyntheticBatch b1 = random_batch(48, 8, 20, t1);
    SyntheticBatch b2 = random_batch(48, 8, 21, t2);

    const std::uint64_t gh = head_hash(global);
    const std::uint64_t h1 = t1.params.content_hash();
    const std::uint64_t h2 = t2.params.content_hash();

    double before = 0.5 * (kl_divergence(forward(global, b1.inputs), forward(t1, b1.inputs)) +
                           kl_divergence(forward(global, b2.inputs), forward(t2, b2.inputs)));

    std::vector<DistillPair> pairs = {{&t1, &b1}, {&t2, &b2}};
    DistillConfig cfg;
    double after = -1.0;
    LayeredModel out = distill_local_to_global(global, pairs, cfg, 3, &after);

    CHECK(head_hash(out) == gh);
    CHECK(t1.params.content_hash() == h1);
    CHECK(t2.params.content_hash() == h2);
    CHECK(after < before);
}

TEST_CASE("l2g: client order depends on the round, result on the order") {
    LayeredModel global = LayeredModel::init(kArch, 22);
    LayeredModel t1 = LayeredModel::init(kArch, 23);
    LayeredModel t2 = LayeredModel::init(kArch, 24);
    LayeredModel t3 = LayeredModel::init(kArch, 25);
    SyntheticBatch b1 = random_batch(40, 8, 26, t1);
    SyntheticBatch b2 = random_batch(40, 8, 27, t2);
    SyntheticBatch b3 = random_batch(40, 8, 28, t3);

    std::vector<DistillPair> pairs = {{&t1, &b1}, {&t2, &b2}, {&t3, &b3}};
    DistillConfig cfg;

    LayeredModel r0a = distill_local_to_global(global, pairs, cfg, 0);
    LayeredModel r0b = distill_local_to_global(global, pairs, cfg, 0);
    CHECK(r0a.params.bit_equal(r0b.params));

    // some nearby round shuffles the three clients differently
    bool any_differs = false;
    for (std::uint64_t round = 1; round <= 8 && !any_differs; ++round) {
        LayeredModel r = distill_local_to_global(global, pairs, cfg, round);
        any_differs = !r.params.bit_equal(r0a.params);
    }
    CHECK(any_differs);
}

TEST_CASE("l2g: empty or null pairs are rejected") {
    LayeredModel global = LayeredModel::init(kArch, 29);
    DistillConfig cfg;
    CHECK_THROWS_AS(distill_local_to_global(global, {}, cfg, 0), InputError);

    SyntheticBatch batch = random_batch(16, 8, 30, global);
    std::vector<DistillPair> bad = {{nullptr, &batch}};
    CHECK_THROWS_AS(distill_local_to_global(global, bad, cfg, 0), InputError);
}

TEST_CASE("feature-space batches distill through the tail of the network") {
    LayeredModel global = LayeredModel::init(kArch, 31);
    LayeredModel client = LayeredModel::init(kArch, 32);

    SyntheticBatch batch;
    batch.feature_layer = 1;
    batch.inputs = Matrix(32, 64); // fc1 input width for the 8 -> 64 -> 32 -> 4 stack
    Rng rng(33);
    for (double& v : batch.inputs.data) v = rng.normal();
    batch.pseudo_labels = pseudo_labels(global, batch.inputs, 1);

    DistillConfig cfg;
    double kl = -1.0;
    LayeredModel out = distill_global_to_local(client, global, batch, cfg, &kl);
    CHECK(kl >= 0.0);
    CHECK_FALSE(out.params.bit_equal(client.params));
}

TEST_CASE("DistillConfig: validation") {
    DistillConfig cfg;
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = DistillConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    DistillConfig{}.validate();
}
