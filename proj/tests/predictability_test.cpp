#include "support.hpp"

#include <gtest/gtest.h>

using namespace predictable;
using testing_support::load_world;

namespace {

struct Solved {
    GridMDP world;
    ObserverModel observer;
    PredictabilityProblem problem;
    PredictableSolution pred;
};

Solved solve(const std::string& name, TypeKind type, std::optional<double> discount = std::nullopt) {
    Solved out{load_world(name), {}, {}, {}};
    out.observer = solve_observer(out.world.mdp, ObserverSpec{});
    out.problem = make_problem(out.world.mdp, out.observer.policy, type, discount.value_or(out.world.mdp.discount()));
    out.pred = solve_predictable(out.problem);
    return out;
}

std::vector<ActionId> set_at(const Solved& s, Coord c, bool tank = false) {
    return s.pred.action_sets.at(s.world.state_at(c, tank).value());
}

} // namespace

TEST(PredDistribution, UniformOverArgmax) {
    const auto d = pred_distribution({0.25, 0.5, 0.25 + 1e-10, 0.5 - 1e-10}, 1e-9);
    EXPECT_EQ(d.argmax, (std::vector<std::size_t>{1, 3}));
    EXPECT_DOUBLE_EQ(d(1), 0.5);
    EXPECT_DOUBLE_EQ(d(3), 0.5);
    EXPECT_DOUBLE_EQ(d(0), 0.0);
    const auto strict = pred_distribution({0.25, 0.5, 0.25, 0.5 - 1e-10}, 0.0);
    EXPECT_EQ(strict.argmax, (std::vector<std::size_t>{1}));
    EXPECT_THROW(pred_distribution({}, 0.0), Error);
}

TEST(Beliefs, ActionAndState) {
    const auto world = load_world("slip_corridor.grid"); // #S~.~G#
    StochasticPolicy obs(world.mdp.num_states(), 4);
    for (StateId s = 0; s < world.mdp.num_states(); ++s) {
        obs.set(s, right, 0.75);
        obs.set(s, up, 0.25);
    }
    const auto p = make_problem(world.mdp, obs, TypeKind::state, 1.0);
    const StateId c1 = world.state_at({2, 1}).value();
    const auto b = state_belief(p, c1);
    // right: half to D1, half to E1; up: wall hit, stays on C1.
    EXPECT_DOUBLE_EQ(b[world.state_at({3, 1}).value()], 0.375);
    EXPECT_DOUBLE_EQ(b[world.state_at({4, 1}).value()], 0.375);
    EXPECT_DOUBLE_EQ(b[c1], 0.25);
    const auto a = action_belief(p, c1);
    EXPECT_EQ(a, (std::vector<double>{0.25, 0.0, 0.0, 0.75}));
    const auto d = pred_distribution(b, p.tie_tolerance);
    EXPECT_EQ(d.argmax.size(), 2u);
}

TEST(PredReward, RangeAndTerminals) {
    const auto s = solve("m8.grid", TypeKind::action);
    const TabularMDP& induced = s.pred.induced;
    for (StateId st = 0; st < induced.num_states(); ++st)
        for (ActionId a = 0; a < 4; ++a)
            for (const Outcome& o : induced.outcomes(st, a)) {
                EXPECT_GE(o.reward, -1.0);
                EXPECT_LE(o.reward, 0.0);
                if (induced.is_terminal(st)) {
                    EXPECT_EQ(o.reward, 0.0);
                }
            }
    const auto b2 = s.world.state_at({1, 2}).value();
    EXPECT_DOUBLE_EQ(induced.reward(b2, up, s.world.state_at({1, 3}).value()), -0.5);
    EXPECT_DOUBLE_EQ(induced.reward(b2, left, b2), -1.0);
}

TEST(PredReward, OutlivesProblem) {
    RewardFn r;
    {
        const auto s = solve("room2x2.grid", TypeKind::action);
        r = pred_reward(s.problem);
    }
    EXPECT_DOUBLE_EQ(r(2, up, 0), -0.5);
}

TEST(SolvePredictable, M8ActionKind) {
    const auto s = solve("m8.grid", TypeKind::action);
    EXPECT_EQ(set_at(s, {1, 2}), (std::vector<ActionId>{up, down}));
    EXPECT_NEAR(s.pred.values.values[s.world.start], -0.5, 1e-9);
    // The base problem itself has no preference at B2 either.
    EXPECT_EQ(s.observer.psi.at(s.world.start), (std::vector<ActionId>{up, down}));
}

TEST(SolvePredictable, M8StateKindPrefersDeterministicCorridor) {
    const auto s = solve("m8.grid", TypeKind::state);
    EXPECT_EQ(set_at(s, {1, 2}), std::vector<ActionId>{up});
    EXPECT_NEAR(expected_errors(s.problem, s.observer.policy, s.world.start), 1.5, 1e-9);
    EXPECT_NEAR(expected_errors(s.problem, s.pred.policy, s.world.start), 0.5, 1e-9);
}

TEST(SolvePredictable, SmallRoomErrors) {
    // 2x2 room: one 50/50 guess at the start whatever the agent does.
    const auto small = solve("room2x2.grid", TypeKind::action);
    EXPECT_NEAR(expected_errors(small.problem, small.observer.policy, small.world.start), 0.5, 1e-9);
    EXPECT_NEAR(expected_errors(small.problem, small.pred.policy, small.world.start), 0.5, 1e-9);

    const auto room = solve("room3x3.grid", TypeKind::action);
    EXPECT_NEAR(expected_errors(room.problem, room.observer.policy, room.world.start), 1.25, 1e-9);
    EXPECT_NEAR(expected_errors(room.problem, room.pred.policy, room.world.start), 1.0, 1e-9);
}

TEST(SolvePredictable, RoomVersusCorridor) {
    const auto s = solve("room_vs_corridor.grid", TypeKind::action);
    EXPECT_EQ(set_at(s, s.world.grid.start), std::vector<ActionId>{up});
    const double base = expected_errors(s.problem, s.observer.policy, s.world.start);
    const double pred = expected_errors(s.problem, s.pred.policy, s.world.start);
    EXPECT_NEAR(pred, 1.5, 1e-9);
    EXPECT_NEAR(base, 3.5234375, 1e-9);
    // The predictable route is two steps longer.
    EXPECT_NEAR(*expected_steps(s.world.mdp, s.pred.policy, s.world.start), 17.0, 1e-9);
    EXPECT_NEAR(*expected_steps(s.world.mdp, s.observer.policy, s.world.start), 15.0, 1e-9);
}

TEST(SolvePredictable, DiscountBreaksTiesTowardsEarlyCertainty) {
    // Undiscounted: both routes cost the same number of errors.
    const auto flat = solve("corridor_room.grid", TypeKind::action, 1.0);
    EXPECT_EQ(set_at(flat, flat.world.grid.start), (std::vector<ActionId>{up, down}));
    // Discounted: errors in the room are pushed later by taking the corridor first.
    const auto disc = solve("corridor_room.grid", TypeKind::action, 0.9);
    EXPECT_EQ(set_at(disc, disc.world.grid.start), std::vector<ActionId>{up});
}

TEST(SolvePredictable, CanonicalPolicyIsLowestIndex) {
    const auto s = solve("m8.grid", TypeKind::action);
    for (StateId st = 0; st < s.pred.action_sets.size(); ++st)
        EXPECT_EQ(s.pred.policy.support(st), std::vector<ActionId>{s.pred.action_sets[st].front()});
}

TEST(Observers, BiasedObserverMakesBaselinePerfect) {
    const auto world = load_world("room3x3.grid");
    const ObserverModel obs = solve_observer(world.mdp, ObserverSpec{ObserverKind::biased, {right, up, left, down}});
    EXPECT_TRUE(obs.policy.is_deterministic());
    const auto p = make_problem(world.mdp, obs.policy, TypeKind::action, 1.0);
    EXPECT_NEAR(expected_errors(p, obs.policy, world.start), 0.0, 1e-12);
    EXPECT_NEAR(solve_predictable(p).values.values[world.start], 0.0, 1e-12);
}

TEST(Observers, SoftmaxObserver) {
    const auto world = load_world("room2x2.grid");
    const ObserverModel obs = solve_observer(world.mdp, ObserverSpec{ObserverKind::softmax, {}, 0.1});
    EXPECT_FALSE(obs.policy.is_deterministic());
    const StateId b1 = world.start;
    EXPECT_NEAR(obs.policy.prob(b1, up), obs.policy.prob(b1, right), 1e-12);
    EXPECT_GT(obs.policy.prob(b1, up), obs.policy.prob(b1, left));
    const auto p = make_problem(world.mdp, obs.policy, TypeKind::action, 1.0);
    EXPECT_NO_THROW(solve_predictable(p));
}

TEST(Problem, Validation) {
    const auto world = load_world("room2x2.grid");
    const auto obs = solve_observer(world.mdp, ObserverSpec{});
    EXPECT_THROW(make_problem(world.mdp, StochasticPolicy(2, 4), TypeKind::action, 1.0), Error);
    EXPECT_THROW(make_problem(world.mdp, obs.policy, TypeKind::action, 0.0), Error);
    EXPECT_THROW(make_problem(world.mdp, obs.policy, TypeKind::action, 1.0, -1.0), Error);
    const auto ff = load_world("ff_corridor.grid");
    const auto ff_obs = solve_observer(ff.mdp, ObserverSpec{});
    EXPECT_THROW(make_problem(ff.mdp, ff_obs.policy, TypeKind::action, 1.0), Error);
}

TEST(Firefighter, PredictablePrefersCorridor) {
    const auto s = solve("ff_room_corridor.grid", TypeKind::action);
    // Full tank at the source: the corridor (right) rather than the room (down).
    EXPECT_EQ(set_at(s, {1, 5}, true), std::vector<ActionId>{right});
    EXPECT_EQ(s.observer.psi.at(s.world.state_at({1, 5}, true).value()), (std::vector<ActionId>{down, right}));
}
