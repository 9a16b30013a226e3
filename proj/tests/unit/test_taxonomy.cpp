#include <gtest/gtest.h>

#include <fstream>

#include "match/errors.hpp"
#include "match/taxonomy.hpp"
#include "temp_dir.hpp"

namespace {

using match::LabelHierarchy;
using Edges = std::vector<std::pair<std::string, std::string>>;

std::vector<std::string> names(const LabelHierarchy& h, const std::vector<match::LabelId>& ids) {
  std::vector<std::string> out;
  for (auto id : ids) out.push_back(h.name(id));
  std::sort(out.begin(), out.end());
  return out;
}

TEST(Taxonomy, TwoChildrenOfOneRoot) {
  Edges e{{"B", "A"}, {"C", "A"}};
  auto h = LabelHierarchy::from_edges(e);
  const auto a = h.labels().at("A"), b = h.labels().at("B"), c = h.labels().at("C");
  EXPECT_EQ(names(h, h.parents(b)), std::vector<std::string>{"A"});
  EXPECT_EQ(names(h, h.parents(c)), std::vector<std::string>{"A"});
  EXPECT_TRUE(h.parents(a).empty());
  EXPECT_EQ(h.roots(), std::vector<match::LabelId>{a});
}

TEST(Taxonomy, TwoCycleIsRejected) {
  Edges e{{"A", "B"}, {"B", "A"}};
  try {
    LabelHierarchy::from_edges(e);
    FAIL() << "expected a cycle error";
  } catch (const match::ValidationError& err) {
    EXPECT_NE(std::string(err.what()).find("cycle"), std::string::npos);
  }
}

TEST(Taxonomy, LongerCycleIsNamed) {
  Edges e{{"A", "B"}, {"B", "C"}, {"C", "A"}, {"D", "A"}};
  try {
    LabelHierarchy::from_edges(e);
    FAIL() << "expected a cycle error";
  } catch (const match::ValidationError& err) {
    const std::string msg = err.what();
    EXPECT_NE(msg.find("A"), std::string::npos);
    EXPECT_NE(msg.find("->"), std::string::npos);
  }
}

TEST(Taxonomy, SelfLoopIsACycle) {
  Edges e{{"A", "A"}};
  EXPECT_THROW(LabelHierarchy::from_edges(e), match::ValidationError);
}

TEST(Taxonomy, MultiParentDag) {
  Edges e{{"C", "A"}, {"C", "B"}};
  auto h = LabelHierarchy::from_edges(e);
  EXPECT_EQ(names(h, h.parents(h.labels().at("C"))), (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(h.edge_list().size(), 2u);
}

TEST(Taxonomy, UnknownLabelIsALookupError) {
  auto h = LabelHierarchy::from_edges(Edges{{"B", "A"}});
  EXPECT_THROW(h.parents(99), match::LookupError);
  EXPECT_THROW(h.children(2), match::LookupError);
}

TEST(Taxonomy, EdgeListCounts) {
  EXPECT_EQ(LabelHierarchy::from_edges(Edges{{"B", "A"}, {"C", "B"}}).edge_list().size(), 2u);
  Edges star;
  for (int i = 0; i < 5; ++i) star.emplace_back("c" + std::to_string(i), "root");
  EXPECT_EQ(LabelHierarchy::from_edges(star).edge_list().size(), 5u);
  EXPECT_TRUE(LabelHierarchy::from_edges(Edges{}).edge_list().empty());
}

TEST(Taxonomy, EdgeListMatchesParentSetsAndIsDeduplicated) {
  Edges e{{"B", "A"}, {"C", "A"}, {"D", "B"}, {"D", "C"}, {"D", "B"}, {"E", "D"}};
  auto h = LabelHierarchy::from_edges(e);
  std::size_t total = 0;
  for (match::LabelId l = 0; l < h.size(); ++l) total += h.parents(l).size();
  EXPECT_EQ(h.edge_list().size(), total);
  EXPECT_EQ(total, 5u);
  for (std::size_t i = 1; i < h.edge_list().size(); ++i) {
    const auto& p = h.edge_list()[i - 1];
    const auto& q = h.edge_list()[i];
    EXPECT_TRUE(p.child < q.child || (p.child == q.child && p.parent < q.parent));
  }
}

TEST(Taxonomy, TopologicalOrderPutsParentsFirst) {
  Edges e{{"E", "D"}, {"D", "B"}, {"D", "C"}, {"B", "A"}, {"C", "A"}};
  auto h = LabelHierarchy::from_edges(e);
  std::vector<std::size_t> pos(h.size());
  for (std::size_t i = 0; i < h.topological_order().size(); ++i) pos[h.topological_order()[i]] = i;
  for (const auto& edge : h.edge_list()) EXPECT_LT(pos[edge.parent], pos[edge.child]);
  EXPECT_EQ(h.level(h.labels().at("A")), 0u);
  EXPECT_EQ(h.level(h.labels().at("E")), 3u);
  EXPECT_EQ(names(h, h.ancestors(h.labels().at("E"))),
            (std::vector<std::string>{"A", "B", "C", "D"}));
}

TEST(Taxonomy, ParentsIsPure) {
  auto h = LabelHierarchy::from_edges(Edges{{"B", "A"}, {"C", "B"}});
  const auto first = h.parents(2);
  EXPECT_EQ(first, h.parents(2));
}

TEST(Taxonomy, SuppliedLabelTableFixesIdsAndRejectsDangling) {
  match::IdTable labels;
  labels.intern("A");
  labels.intern("B");
  labels.intern("C");
  auto h = LabelHierarchy::from_edges(Edges{{"C", "A"}}, &labels);
  EXPECT_EQ(h.size(), 3u);
  EXPECT_EQ(h.parents(2), std::vector<match::LabelId>{0});
  EXPECT_TRUE(h.parents(1).empty());
  EXPECT_THROW(LabelHierarchy::from_edges(Edges{{"Z", "A"}}, &labels), match::ValidationError);
}

TEST(Taxonomy, RootRemovalRerootsChildren) {
  Edges e{{"ml", "cs"}, {"db", "cs"}, {"dl", "ml"}};
  auto h = LabelHierarchy::from_edges(e, nullptr, {.remove_root = true});
  EXPECT_FALSE(h.labels().find("cs"));
  EXPECT_TRUE(h.parents(h.labels().at("ml")).empty());
  EXPECT_TRUE(h.parents(h.labels().at("db")).empty());
  EXPECT_EQ(h.edge_list().size(), 1u);
  EXPECT_EQ(h.removed_labels(), std::vector<std::string>{"cs"});

  Edges two_roots{{"b", "a"}, {"d", "c"}};
  EXPECT_THROW(LabelHierarchy::from_edges(two_roots, nullptr, {.remove_root = true}),
               match::ValidationError);
}

TEST(Taxonomy, FileRoundTrip) {
  match::testing::TempDir dir;
  {
    std::ofstream out(dir / "h.tsv");
    out << "# comment\nB\tA\nC\tA\n\nlonely\nD\tC\n";
  }
  auto h = LabelHierarchy::load(dir / "h.tsv");
  EXPECT_EQ(h.size(), 5u);
  EXPECT_EQ(h.edge_list().size(), 3u);
  EXPECT_TRUE(h.parents(h.labels().at("lonely")).empty());

  h.save(dir / "out.tsv");
  auto again = LabelHierarchy::load(dir / "out.tsv", &h.labels());
  EXPECT_EQ(std::vector(again.edge_list().begin(), again.edge_list().end()),
            std::vector(h.edge_list().begin(), h.edge_list().end()));
}

TEST(Taxonomy, MalformedFileReportsLine) {
  match::testing::TempDir dir;
  {
    std::ofstream out(dir / "bad.tsv");
    out << "B\tA\nC\tA\textra\n";
  }
  try {
    LabelHierarchy::load(dir / "bad.tsv");
    FAIL();
  } catch (const match::ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

}  // namespace
