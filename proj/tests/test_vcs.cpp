#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"

#include "buildherd/error.hpp"
#include "buildherd/vcs.hpp"

using namespace buildherd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& content) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << content;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kParse;
}

}  // namespace

TEST_CASE("in-memory head and commits") {
  auto repo = make_in_memory("r1");
  const auto h0 = head(repo);
  CHECK(h0.seq == 0);
  CHECK(h0.id == kEmptyRevisionId);

  commit(repo, "ann", {"a.c"}, from_ms(1));
  commit(repo, "bob", {"b.c"}, from_ms(2));
  const auto r3 = commit(repo, "ann", {"c.c", "d.c"}, from_ms(3));
  CHECK(head(repo) == r3);
  CHECK(r3.seq == 3);
  CHECK(changes_since(repo, h0).size() == 3);
}

TEST_CASE("changes_since ranges") {
  auto repo = make_in_memory("r1");
  const auto r1 = commit(repo, "ann", {"a"}, from_ms(1));
  commit(repo, "ann", {"b"}, from_ms(2));
  commit(repo, "ann", {"c"}, from_ms(3));

  CHECK(changes_since(repo, head(repo)).empty());
  const auto after1 = changes_since(repo, r1);
  REQUIRE(after1.size() == 2);
  CHECK(after1[0].revision.seq == 2);
  CHECK(after1[1].revision.seq == 3);
  CHECK(after1[1].changed_paths == std::vector<std::string>{"c"});

  CHECK(code_of([&] { changes_since(repo, Revision{"x", 9}); }) == ErrorCode::kUnknownRevision);
  CHECK(code_of([&] { changes_since(repo, Revision{"wrong-id", 2}); }) == ErrorCode::kUnknownRevision);
}

TEST_CASE("commit without paths is rejected") {
  auto repo = make_in_memory("r1");
  CHECK(code_of([&] { commit(repo, "ann", {}, from_ms(1)); }) == ErrorCode::kEmptyPaths);
  CHECK(head(repo).seq == 0);
}

TEST_CASE("revision ids are distinct per seq") {
  auto repo = make_in_memory("r1");
  const auto a = commit(repo, "ann", {"a"}, from_ms(1));
  const auto b = commit(repo, "ann", {"a"}, from_ms(1));
  CHECK(a.id != b.id);
}

TEST_CASE("random commit sequences: head seq counts commits, ranges concatenate") {
  std::mt19937 rng(11);
  for (int round = 0; round < 50; ++round) {
    auto repo = make_in_memory("r");
    std::vector<Revision> revs{head(repo)};
    const int n = std::uniform_int_distribution<int>(0, 40)(rng);
    for (int i = 0; i < n; ++i) revs.push_back(commit(repo, "dev", {"f" + std::to_string(i)}, from_ms(i)));
    CHECK(head(repo).seq == static_cast<std::uint64_t>(n));

    std::uniform_int_distribution<int> cut(0, n);
    int a = cut(rng);
    int b = cut(rng);
    if (a > b) std::swap(a, b);
    auto left = changes_since(repo, revs[a]);
    const auto mid = changes_since(repo, revs[b]);
    left.resize(left.size() - mid.size());  // (a, b]
    auto joined = left;
    joined.insert(joined.end(), mid.begin(), mid.end());
    CHECK(joined == changes_since(repo, revs[a]));
    for (std::size_t i = 0; i < left.size(); ++i) CHECK(left[i].revision == revs[a + 1 + i]);
  }
}

TEST_CASE("directory snapshots") {
  TempDir dir("buildherd-vcs-dir");
  const auto root = dir.path / "tree";
  const auto manifest = dir.path / "tree.manifest";
  write_file(root / "src/main.c", "int main() {}\n");
  write_file(root / "README", "hi\n");

  auto repo = make_directory_hash("d1", root, manifest);
  CHECK(head(repo).seq == 0);

  const auto r1 = snapshot(repo, from_ms(10));
  CHECK(r1.seq == 1);

  SUBCASE("unchanged tree is idempotent") {
    CHECK(snapshot(repo, from_ms(20)) == r1);
    CHECK(changes_since(repo, r1).empty());
  }

  SUBCASE("one edited file") {
    write_file(root / "src/main.c", "int main() { return 1; }\n");
    const auto r2 = snapshot(repo, from_ms(20));
    CHECK(r2.seq == 2);
    const auto changes = changes_since(repo, r1);
    REQUIRE(changes.size() == 1);
    CHECK(changes[0].changed_paths == std::vector<std::string>{"src/main.c"});
    CHECK(changes[0].timestamp == from_ms(20));
  }

  SUBCASE("deleted and added files") {
    fs::remove(root / "README");
    write_file(root / "NEWS", "x\n");
    snapshot(repo, from_ms(30));
    const auto changes = changes_since(repo, r1);
    REQUIRE(changes.size() == 1);
    CHECK(changes[0].changed_paths == std::vector<std::string>{"NEWS", "README"});
  }

  SUBCASE("manifest survives a restart") {
    write_file(root / "README", "changed\n");
    const auto r2 = snapshot(repo, from_ms(40));
    auto reopened = make_directory_hash("d1", root, manifest);
    CHECK(head(reopened) == r2);
    CHECK(changes_since(reopened, empty_revision()) == changes_since(repo, empty_revision()));
    CHECK(snapshot(reopened, from_ms(50)) == r2);

    std::ifstream in(manifest);
    std::string first;
    std::getline(in, first);
    CHECK(first == "buildherd-manifest v1 sha256");
  }

  SUBCASE("deleted root is unreachable") {
    fs::remove_all(root);
    CHECK(code_of([&] { snapshot(repo, from_ms(60)); }) == ErrorCode::kRepositoryUnreachable);
    CHECK(code_of([&] { head(repo); }) == ErrorCode::kRepositoryUnreachable);
  }
}

TEST_CASE("manifest inside the root is not part of the tree") {
  TempDir dir("buildherd-vcs-inner");
  write_file(dir.path / "a.txt", "a");
  auto repo = make_directory_hash("d", dir.path, dir.path / ".buildherd-manifest");
  const auto r1 = snapshot(repo, from_ms(1));
  CHECK(snapshot(repo, from_ms(2)) == r1);
}

TEST_CASE("empty directory stays at seq 0") {
  TempDir dir("buildherd-vcs-empty");
  fs::create_directories(dir.path / "tree");
  auto repo = make_directory_hash("d", dir.path / "tree", dir.path / "m");
  CHECK(snapshot(repo, from_ms(1)) == empty_revision());
}

TEST_CASE("adapter-specific operations check the handle kind") {
  auto mem = make_in_memory("m");
  CHECK(code_of([&] { snapshot(mem, from_ms(1)); }) == ErrorCode::kInvalidArgument);
}
