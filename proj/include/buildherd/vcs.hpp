#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>
#include <vector>

#include "buildherd/model.hpp"

namespace buildherd {

// Id of the empty repository state (seq 0) for every adapter.
inline constexpr std::string_view kEmptyRevisionId =
    "0000000000000000000000000000000000000000000000000000000000000000";

inline Revision empty_revision() { return Revision{std::string(kEmptyRevisionId), 0}; }

// A single line of history. Reads may run concurrently; mutations are
// serialized by the caller per repository.
class Repository {
 public:
  virtual ~Repository() = default;

  virtual Revision head() const = 0;
  // All changes with seq in (since.seq, head.seq], ascending.
  virtual std::vector<Change> changes_since(const Revision& since) const = 0;
  // Brings the view of the repository up to date and returns head. Only the
  // directory adapter does real work here.
  virtual Revision refresh(Instant now) = 0;
};

class InMemoryRepository final : public Repository {
 public:
  InMemoryRepository();

  Revision head() const override;
  std::vector<Change> changes_since(const Revision& since) const override;
  Revision refresh(Instant now) override;

  Revision commit(const std::string& author, std::vector<std::string> paths, Instant at);

 private:
  mutable std::shared_mutex mu_;
  std::vector<Change> log_;  // log_[i] has seq i + 1
};

// Working-tree adapter: every snapshot hashes the tree under `root` and
// appends a revision to the manifest when anything changed.
class DirectoryHashRepository final : public Repository {
 public:
  DirectoryHashRepository(std::filesystem::path root, std::filesystem::path manifest);

  Revision head() const override;
  std::vector<Change> changes_since(const Revision& since) const override;
  Revision refresh(Instant now) override { return snapshot(now); }

  Revision snapshot(Instant at);

  const std::filesystem::path& root() const { return root_; }
  const std::filesystem::path& manifest() const { return manifest_; }

 private:
  using FileHashes = std::map<std::string, std::string>;

  struct Entry {
    std::uint64_t seq = 0;
    std::string tree_hash;
    Instant at;
    FileHashes files;
  };

  void load_manifest();
  void check_root() const;
  FileHashes scan() const;
  Change change_for(std::size_t index) const;

  std::filesystem::path root_;
  std::filesystem::path manifest_;
  mutable std::shared_mutex mu_;
  std::vector<Entry> entries_;  // entries_[i] has seq i + 1
};

struct RepositoryHandle {
  std::string repo_id;
  std::shared_ptr<Repository> repo;
};

RepositoryHandle make_in_memory(std::string repo_id);
RepositoryHandle make_directory_hash(std::string repo_id, std::filesystem::path root,
                                     std::filesystem::path manifest);

Revision head(const RepositoryHandle& repo);
std::vector<Change> changes_since(const RepositoryHandle& repo, const Revision& since);
Revision refresh(const RepositoryHandle& repo, Instant now);
// Throws kInvalidArgument unless the handle is in-memory.
Revision commit(const RepositoryHandle& repo, const std::string& author,
                std::vector<std::string> paths, Instant at);
// Throws kInvalidArgument unless the handle is a directory adapter.
Revision snapshot(const RepositoryHandle& repo, Instant at);

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

}  // namespace buildherd
