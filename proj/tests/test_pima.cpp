#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "dpcl/math.hpp"
#include "dpcl/pima.hpp"
#include "dpcl/rng.hpp"

using namespace dpcl;

namespace {

Tensor vec(std::vector<double> v) { return Tensor::from_vector(std::move(v)); }

Tensor branch_mean(const std::vector<Tensor>& ps) {
    Tensor m(ps[0].shape());
    for (const Tensor& p : ps)
        for (std::size_t c = 0; c < m.size(); ++c) m[c] += p[c];
    for (std::size_t c = 0; c < m.size(); ++c) m[c] /= static_cast<double>(ps.size());
    return m;
}

}  // namespace

TEST_CASE("mutual information: agreement scores zero, disagreement scores ln 2") {
    std::vector<Tensor> same{vec({0.7, 0.3}), vec({0.7, 0.3}), vec({0.7, 0.3})};
    CHECK(mutual_information(vec({0.7, 0.3}), same) == 0.0);  // exact cancellation

    std::vector<Tensor> opposed{vec({1.0, 0.0}), vec({0.0, 1.0})};
    double info = mutual_information(vec({0.5, 0.5}), opposed);
    CHECK(info == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("mutual information bounds and validation") {
    RngState rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t C = 2 + rng.next_below(4);
        std::vector<Tensor> ps;
        for (int n = 0; n < 4; ++n) ps.push_back(softmax(sample_gaussian(rng, {C})));
        double info = mutual_information(branch_mean(ps), ps);
        CHECK(info >= -1e-12);
        CHECK(info <= std::log(static_cast<double>(C)) + 1e-12);
    }

    CHECK_THROWS_AS(mutual_information(vec({0.5, 0.5}), {}), std::invalid_argument);
    CHECK_THROWS_AS(mutual_information(vec({0.5, 0.5}), {vec({1.0, 0.0, 0.0})}),
                    std::invalid_argument);
    // p_bar must actually be the branch mean.
    CHECK_THROWS_AS(mutual_information(vec({0.9, 0.1}), {vec({0.5, 0.5}), vec({0.5, 0.5})}),
                    std::invalid_argument);
}

TEST_CASE("memory appends below capacity and tracks class counts") {
    ReplayMemory mem(3, 2);
    CHECK(mem.capacity() == 3);
    CHECK(mem.size() == 0);
    CHECK(mem.mean_history() == 0.0);

    InsertResult r0 = mem.insert_by_information(vec({1.0}), 0, 0.4, 10);
    CHECK(r0.outcome == InsertOutcome::Appended);
    InsertResult r1 = mem.insert_by_information(vec({2.0}), 1, 0.6, 11);
    CHECK(r1.outcome == InsertOutcome::Appended);
    CHECK(mem.size() == 2);
    CHECK(mem.class_count(0) == 1);
    CHECK(mem.class_count(1) == 1);
    CHECK(mem.entry(0).label == 0);
    CHECK(mem.entry(0).history == 0.4);  // history initialized to the arrival score
    CHECK(mem.entry(0).insert_iteration == 10);
    CHECK(mem.mean_history() == doctest::Approx(0.5).epsilon(1e-14));

    CHECK_THROWS_AS(mem.entry(5), std::out_of_range);
    CHECK_THROWS_AS(mem.class_count(7), std::invalid_argument);
    CHECK_THROWS_AS(mem.insert_by_information(vec({0.0}), -1, 0.1, 0), std::invalid_argument);
}

TEST_CASE("worked two-slot example: crowded-class victim loses to richer arrival") {
    ReplayMemory mem(2, 2);
    mem.insert_by_information(vec({1.0}), 0, 0.1, 0);
    mem.insert_by_information(vec({2.0}), 0, 0.3, 1);
    CHECK(mem.size() == 2);

    // Candidate from class 1 with score 0.2: class 0 is most populous, its
    // weakest member holds 0.1 < 0.2, so slot 0 is replaced.
    InsertResult r = mem.insert_by_information(vec({3.0}), 1, 0.2, 2);
    CHECK(r.outcome == InsertOutcome::Replaced);
    CHECK(r.victim_slot == 0);
    CHECK(mem.class_count(0) == 1);
    CHECK(mem.class_count(1) == 1);
    CHECK(mem.entry(0).label == 1);
    CHECK(mem.entry(0).history == 0.2);
    CHECK(mem.entry(0).x == vec({3.0}));
    CHECK(mem.entry(1).history == 0.3);  // survivor untouched
}

TEST_CASE("insertion skips when the arrival cannot beat the weakest member") {
    ReplayMemory mem(2, 2);
    mem.insert_by_information(vec({1.0}), 0, 0.1, 0);
    mem.insert_by_information(vec({2.0}), 0, 0.3, 1);

    InsertResult low = mem.insert_by_information(vec({3.0}), 1, 0.05, 2);
    CHECK(low.outcome == InsertOutcome::Skipped);
    CHECK(mem.entry(0).label == 0);  // nothing changed
    CHECK(mem.class_count(1) == 0);

    // Equal score also skips: the incumbent wins ties.
    InsertResult equal = mem.insert_by_information(vec({3.0}), 1, 0.1, 3);
    CHECK(equal.outcome == InsertOutcome::Skipped);
}

TEST_CASE("victim selection tie-breaking: class id, insertion age, slot order") {
    // Class populations tie -> the smaller class id is the crowded one.
    ReplayMemory mem(4, 3);
    mem.insert_by_information(vec({0.0}), 0, 0.5, 0);
    mem.insert_by_information(vec({1.0}), 0, 0.6, 1);
    mem.insert_by_information(vec({2.0}), 1, 0.1, 2);
    mem.insert_by_information(vec({3.0}), 1, 0.2, 3);
    InsertResult r = mem.insert_by_information(vec({4.0}), 2, 0.55, 4);
    CHECK(r.outcome == InsertOutcome::Replaced);
    CHECK(r.victim_slot == 0);  // class 0 beats class 1 on the tie; weakest is 0.5
    CHECK(mem.class_count(0) == 1);
    CHECK(mem.class_count(2) == 1);

    // History tie inside the crowded class -> the older insertion goes first.
    ReplayMemory mem2(2, 2);
    mem2.insert_by_information(vec({0.0}), 0, 0.5, 9);   // slot 0, newer
    mem2.insert_by_information(vec({1.0}), 0, 0.5, 2);   // slot 1, older
    InsertResult r2 = mem2.insert_by_information(vec({2.0}), 1, 0.7, 10);
    CHECK(r2.outcome == InsertOutcome::Replaced);
    CHECK(r2.victim_slot == 1);

    // Full tie -> the smallest slot.
    ReplayMemory mem3(2, 2);
    mem3.insert_by_information(vec({0.0}), 0, 0.5, 4);
    mem3.insert_by_information(vec({1.0}), 0, 0.5, 4);
    InsertResult r3 = mem3.insert_by_information(vec({2.0}), 1, 0.9, 5);
    CHECK(r3.outcome == InsertOutcome::Replaced);
    CHECK(r3.victim_slot == 0);
}

TEST_CASE("zero-capacity memory swallows nothing") {
    ReplayMemory mem(0, 2);
    InsertResult r = mem.insert_by_information(vec({1.0}), 0, 5.0, 0);
    CHECK(r.outcome == InsertOutcome::Skipped);
    CHECK(mem.size() == 0);
    RngState rng(1);
    InsertResult rr = mem.insert_reservoir(vec({1.0}), 0, 0, 0, rng);
    CHECK(rr.outcome == InsertOutcome::Skipped);
}

TEST_CASE("reservoir insertion fills, then replaces by arrival-index draw") {
    RngState rng = RngState(55).substream("res");
    ReplayMemory mem(4, 2);
    for (std::size_t i = 0; i < 4; ++i) {
        InsertResult r =
            mem.insert_reservoir(vec({double(i)}), static_cast<int>(i % 2), long(i), i, rng);
        CHECK(r.outcome == InsertOutcome::Appended);
        CHECK(mem.entry(i).history == 0.0);  // reservoir keeps no scores
    }
    // At capacity the draw decides: replicate it with a cloned generator.
    for (std::size_t arrival = 4; arrival < 40; ++arrival) {
        RngState probe = rng;  // value copy sees the identical next draw
        std::uint64_t j = probe.next_below(arrival + 1);
        InsertResult r = mem.insert_reservoir(vec({9.0}), 1, long(arrival), arrival, rng);
        if (j < 4) {
            CHECK(r.outcome == InsertOutcome::Replaced);
            CHECK(r.victim_slot == j);
            CHECK(mem.entry(j).x == vec({9.0}));
        } else {
            CHECK(r.outcome == InsertOutcome::Skipped);
        }
        CHECK(mem.size() == 4);
    }
    std::size_t total = mem.class_count(0) + mem.class_count(1);
    CHECK(total == 4);  // counts stay consistent through replacements
}

TEST_CASE("history updates follow the EMA and touch only their slot") {
    ReplayMemory mem(3, 2);
    mem.insert_by_information(vec({0.0}), 0, 2.0, 0);
    mem.insert_by_information(vec({1.0}), 1, 0.8, 1);

    mem.update_history(0, 0.0, 0.5);  // (1-0.5)*2 + 0.5*0 = 1
    CHECK(mem.entry(0).history == 1.0);
    CHECK(mem.entry(1).history == 0.8);

    mem.update_history(1, 0.4, 1.0);  // gamma 1 adopts the new score outright
    CHECK(mem.entry(1).history == 0.4);

    CHECK(mem.mean_history() == doctest::Approx(0.7).epsilon(1e-14));

    CHECK_THROWS_AS(mem.update_history(5, 0.1, 0.5), std::out_of_range);
    CHECK_THROWS_AS(mem.update_history(0, 0.1, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(mem.update_history(0, 0.1, 1.5), std::invalid_argument);
}

TEST_CASE("learning-rate state validates its construction") {
    CHECK_THROWS_AS(LrState(0.0, 1.05, LrMode::MainText), std::invalid_argument);
    CHECK_THROWS_AS(LrState(3e-4, 1.0, LrMode::MainText), std::invalid_argument);
    CHECK_THROWS_AS(LrState(3e-4, 0.9, LrMode::MainText), std::invalid_argument);
    CHECK_THROWS_AS(LrState(3e-4, 1.0, LrMode::Appendix), std::invalid_argument);
    CHECK_THROWS_AS(LrState(3e-4, 1.2, LrMode::Appendix), std::invalid_argument);
    CHECK_NOTHROW(LrState(3e-4, 1.05, LrMode::MainText));
    CHECK_NOTHROW(LrState(3e-4, 0.95, LrMode::Appendix));
    CHECK_NOTHROW(LrState(3e-4, 1.0, LrMode::Off));
}

TEST_CASE("main-text adaptation: up on strictly rising mean history, down otherwise") {
    LrState lr(3e-4, 1.05, LrMode::MainText);
    ReplayMemory mem(4, 2);
    mem.insert_by_information(vec({0.0}), 0, 0.5, 0);  // mean history 0.5 > prev 0

    lr.adapt(mem, true);
    CHECK(lr.exponent() == 1);
    CHECK(lr.rate() == doctest::Approx(3.15e-4).epsilon(1e-14));  // 3e-4 * 1.05
    CHECK(lr.previous_mean() == 0.5);

    // Unchanged mean is not strictly rising: step back down, exactly.
    lr.adapt(mem, true);
    CHECK(lr.exponent() == 0);
    CHECK(lr.rate() == 3e-4);  // integer exponent makes the reversal exact

    // Falling mean also steps down.
    mem.update_history(0, 0.0, 0.5);  // mean history now 0.25
    lr.adapt(mem, true);
    CHECK(lr.exponent() == -1);
    CHECK(lr.rate() == doctest::Approx(3e-4 / 1.05).epsilon(1e-14));
}

TEST_CASE("adaptation is gated on a snapshot-mean update") {
    LrState lr(3e-4, 1.05, LrMode::MainText);
    ReplayMemory mem(4, 2);
    mem.insert_by_information(vec({0.0}), 0, 0.9, 0);
    lr.adapt(mem, false);  // no snapshot mean moved this iteration
    CHECK(lr.exponent() == 0);
    CHECK(lr.rate() == 3e-4);
    CHECK(lr.previous_mean() == 0.0);  // the comparison point is untouched too

    LrState off(3e-4, 1.0, LrMode::Off);
    off.adapt(mem, true);
    CHECK(off.rate() == 3e-4);
    CHECK(off.exponent() == 0);
}

TEST_CASE("appendix adaptation shrinks on non-decreasing history") {
    LrState lr(1e-3, 0.5, LrMode::Appendix);
    ReplayMemory mem(4, 2);
    mem.insert_by_information(vec({0.0}), 0, 0.4, 0);

    lr.adapt(mem, true);  // 0.4 >= 0 -> scale by omega (down)
    CHECK(lr.exponent() == 1);
    CHECK(lr.rate() == 0.5e-3);

    lr.adapt(mem, true);  // equal counts as non-decreasing in this variant
    CHECK(lr.exponent() == 2);
    CHECK(lr.rate() == 0.25e-3);

    mem.update_history(0, 0.0, 0.75);  // mean drops to 0.1
    lr.adapt(mem, true);
    CHECK(lr.exponent() == 1);
    CHECK(lr.rate() == 0.5e-3);
}

TEST_CASE("rate always equals initial times omega to the integer exponent") {
    LrState lr(2e-4, 1.05, LrMode::MainText);
    ReplayMemory mem(2, 2);
    mem.insert_by_information(vec({0.0}), 0, 0.1, 0);
    RngState rng(77);
    for (int step = 0; step < 200; ++step) {
        mem.update_history(0, rng.next_unit(), 0.5);
        lr.adapt(mem, rng.next_below(2) == 0);
        CHECK(lr.rate() == 2e-4 * std::pow(1.05, static_cast<double>(lr.exponent())));
    }

    // Restore recomputes the same rate from the exponent.
    LrState fresh(2e-4, 1.05, LrMode::MainText);
    fresh.restore(lr.exponent(), lr.previous_mean());
    CHECK(fresh.rate() == lr.rate());
    CHECK(fresh.previous_mean() == lr.previous_mean());
}

TEST_CASE("stream buffer is a bounded FIFO addressed newest-first") {
    CHECK_THROWS_AS(StreamBuffer(0), std::invalid_argument);
    StreamBuffer buf(2);
    buf.push(vec({1.0}), 0);
    buf.push(vec({2.0}), 1);
    CHECK(buf.size() == 2);
    buf.push(vec({3.0}), 0);  // evicts the oldest
    CHECK(buf.size() == 2);
    CHECK(buf.newest(0).x == vec({3.0}));
    CHECK(buf.newest(1).x == vec({2.0}));
    CHECK(buf.newest(0).label == 0);
    CHECK_THROWS_AS(buf.newest(2), std::out_of_range);
}

TEST_CASE("training batches take half stream, half memory, padding short sides") {
    RngState fill(88);
    ReplayMemory mem(10, 4);
    for (int i = 0; i < 10; ++i)
        mem.insert_by_information(sample_gaussian(fill, {3}), i % 4, 0.1 * i, i);
    StreamBuffer buf(4);
    for (int i = 0; i < 4; ++i) buf.push(sample_gaussian(fill, {3}), 3 - i);

    RngState rng = RngState(89).substream("draw");
    std::vector<BatchSample> batch = draw_training_batch(mem, buf, 8, rng);
    REQUIRE(batch.size() == 8);
    // First half: newest stream samples in arrival-reversed order, no slot ids.
    for (int i = 0; i < 4; ++i) {
        CHECK(batch[i].memory_slot == -1);
        CHECK(batch[i].x == buf.newest(i).x);
        CHECK(batch[i].label == buf.newest(i).label);
    }
    // Second half: distinct memory slots whose payloads match the entries.
    std::set<int> slots;
    for (int i = 4; i < 8; ++i) {
        REQUIRE(batch[i].memory_slot >= 0);
        slots.insert(batch[i].memory_slot);
        const MemoryEntry& e = mem.entry(static_cast<std::size_t>(batch[i].memory_slot));
        CHECK(batch[i].x == e.x);
        CHECK(batch[i].label == e.label);
    }
    CHECK(slots.size() == 4);  // without replacement

    // Determinism under the same generator state.
    RngState rng2 = RngState(89).substream("draw");
    std::vector<BatchSample> again = draw_training_batch(mem, buf, 8, rng2);
    REQUIRE(again.size() == 8);
    for (int i = 0; i < 8; ++i) {
        CHECK(again[i].x == batch[i].x);
        CHECK(again[i].memory_slot == batch[i].memory_slot);
    }
}

TEST_CASE("batch padding covers an empty or short memory and a short stream") {
    RngState fill(90);
    StreamBuffer buf(3);
    for (int i = 0; i < 3; ++i) buf.push(sample_gaussian(fill, {2}), i);

    // Memory empty: the stream fills what it can (3 of 4 requested).
    ReplayMemory empty(5, 3);
    RngState r1 = RngState(91).substream("a");
    std::vector<BatchSample> b1 = draw_training_batch(empty, buf, 4, r1);
    REQUIRE(b1.size() == 3);
    for (const auto& s : b1) CHECK(s.memory_slot == -1);

    // Memory of one: stream pads the remainder.
    ReplayMemory one(5, 3);
    one.insert_by_information(sample_gaussian(fill, {2}), 2, 0.5, 0);
    RngState r2 = RngState(91).substream("b");
    std::vector<BatchSample> b2 = draw_training_batch(one, buf, 6, r2);
    REQUIRE(b2.size() == 4);  // 3 stream + 1 memory is all there is
    CHECK(b2[3].memory_slot == 0);

    // Stream of one with a deep memory: memory fills the rest.
    StreamBuffer tiny(1);
    tiny.push(sample_gaussian(fill, {2}), 0);
    ReplayMemory deep(8, 3);
    for (int i = 0; i < 8; ++i)
        deep.insert_by_information(sample_gaussian(fill, {2}), i % 3, 0.1, i);
    RngState r3 = RngState(91).substream("c");
    std::vector<BatchSample> b3 = draw_training_batch(deep, tiny, 6, r3);
    REQUIRE(b3.size() == 6);
    CHECK(b3[0].memory_slot == -1);
    std::set<int> slots;
    for (int i = 1; i < 6; ++i) {
        CHECK(b3[i].memory_slot >= 0);
        slots.insert(b3[i].memory_slot);
    }
    CHECK(slots.size() == 5);

    // One of each: the pair makes the whole batch.
    RngState r4 = RngState(91).substream("d");
    std::vector<BatchSample> b4 = draw_training_batch(one, tiny, 2, r4);
    REQUIRE(b4.size() == 2);
    CHECK(b4[0].memory_slot == -1);
    CHECK(b4[1].memory_slot == 0);

    // Validation.
    ReplayMemory none(5, 3);
    StreamBuffer fresh(2);
    RngState r5(92);
    CHECK_THROWS_AS(draw_training_batch(none, fresh, 4, r5), std::invalid_argument);
    CHECK_THROWS_AS(draw_training_batch(one, tiny, 3, r5), std::invalid_argument);
    CHECK_THROWS_AS(draw_training_batch(one, tiny, 0, r5), std::invalid_argument);
}
