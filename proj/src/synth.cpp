#include "opatt/synth.hpp"

#include <random>
#include <set>
#include <utility>

#include "opatt/error.hpp"

namespace opatt {

namespace {

constexpr const char* kTeams[] = {"Hawks",   "Heat",    "Celtics", "Lakers",  "Bulls",   "Knicks",   "Nets",
                                  "Magic",   "Bucks",   "Suns",    "Spurs",   "Jazz",    "Kings",    "Clippers",
                                  "Warriors", "Pistons", "Pacers", "Cavaliers", "Raptors", "Wizards", "Hornets",
                                  "Grizzlies", "Pelicans", "Thunder", "Nuggets", "Rockets", "Mavericks", "Blazers"};
constexpr const char* kCities[] = {"Atlanta", "Miami",   "Boston",  "Chicago", "Denver", "Houston", "Dallas",
                                   "Phoenix", "Orlando", "Detroit", "Memphis", "Toronto", "Utah",   "Indiana"};

std::uint32_t lo(std::uint64_t v) { return static_cast<std::uint32_t>(v); }
std::uint32_t hi(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

struct Game {
  int winner_points;
  int loser_points;
};

Example make_example(std::size_t index, const std::string& prefix, const Game& game, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> team(0, std::size(kTeams) - 1);
  std::uniform_int_distribution<std::size_t> city(0, std::size(kCities) - 1);
  std::uniform_int_distribution<int> rebound(30, 60);
  std::bernoulli_distribution winner_first(0.5);

  const std::size_t w = team(rng);
  std::size_t l = team(rng);
  while (l == w) l = team(rng);
  const bool first = winner_first(rng);
  const int w_row = first ? 1 : 2;

  std::vector<Record> records;
  for (int row = 1; row <= 2; ++row) {
    const bool is_winner = row == w_row;
    const int points = is_winner ? game.winner_points : game.loser_points;
    records.push_back({row, "Team", kTeams[is_winner ? w : l], std::nullopt});
    records.push_back({row, "City", kCities[city(rng)], std::nullopt});
    records.push_back({row, "Points", std::to_string(points), static_cast<double>(points)});
    const int reb = rebound(rng);
    records.push_back({row, "Rebound", std::to_string(reb), static_cast<double>(reb)});
  }
  const std::string text = std::string(kTeams[w]) + " " + gap_verb(game.winner_points - game.loser_points) + " " +
                           kTeams[l] + " " + std::to_string(game.winner_points) + " - " +
                           std::to_string(game.loser_points);
  char id[32];
  std::snprintf(id, sizeof id, "%s%06zu", prefix.c_str(), index + 1);
  return {id, RecordTable(std::move(records)), tokenize(text)};
}

}  // namespace

const char* gap_verb(int gap) {
  if (gap < 5) return "edges";
  if (gap < 10) return "tops";
  if (gap < 20) return "beats";
  return "routs";
}

SynthCorpus synthesize(const SynthConfig& c) {
  if (c.loser_min > c.loser_max || c.gap_min < 1 || c.gap_min > c.gap_max) {
    throw ContractError("synthetic score ranges are empty or allow ties");
  }
  const std::size_t pairs = static_cast<std::size_t>(c.loser_max - c.loser_min + 1) *
                            static_cast<std::size_t>(c.gap_max - c.gap_min + 1);
  std::seed_seq seq{lo(c.seed), hi(c.seed), 0x73796e74u};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<int> loser(c.loser_min, c.loser_max);
  std::uniform_int_distribution<int> gap(c.gap_min, c.gap_max);
  const auto draw = [&] {
    const int l = loser(rng);
    return Game{l + gap(rng), l};
  };

  SynthCorpus out;
  std::set<std::pair<int, int>> reserved;
  for (std::size_t i = 0; i < c.heldout; ++i) {
    const Game g = draw();
    reserved.insert({g.winner_points, g.loser_points});
    out.heldout.push_back(make_example(i, "heldout-", g, rng));
  }
  if (c.count > 0 && reserved.size() >= pairs) throw ContractError("held-out set uses every score pair");
  for (std::size_t i = 0; i < c.count; ++i) {
    Game g = draw();
    while (reserved.contains({g.winner_points, g.loser_points})) g = draw();
    out.examples.push_back(make_example(i, "synth-", g, rng));
  }
  return out;
}

}  // namespace opatt
