#include "buildherd/vcs.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <fstream>
#include <mutex>
#include <sstream>
#include <system_error>

#include "buildherd/error.hpp"

namespace buildherd {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kManifestHeader = "buildherd-manifest v1 sha256";

[[noreturn]] void unknown_revision(const Revision& since, std::uint64_t head_seq) {
  throw Error(ErrorCode::kUnknownRevision, "revision " + std::to_string(since.seq) +
                                               " is not known (head is " +
                                               std::to_string(head_seq) + ")");
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * SHA256_DIGEST_LENGTH);
  for (unsigned char b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xf]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// InMemoryRepository

InMemoryRepository::InMemoryRepository() = default;

Revision InMemoryRepository::head() const {
  std::shared_lock lock(mu_);
  return log_.empty() ? empty_revision() : log_.back().revision;
}

std::vector<Change> InMemoryRepository::changes_since(const Revision& since) const {
  std::shared_lock lock(mu_);
  const std::uint64_t head_seq = log_.size();
  if (since.seq > head_seq) unknown_revision(since, head_seq);
  const auto& known = since.seq == 0 ? std::string(kEmptyRevisionId) : log_[since.seq - 1].revision.id;
  if (since.id != known) unknown_revision(since, head_seq);
  return {log_.begin() + static_cast<std::ptrdiff_t>(since.seq), log_.end()};
}

Revision InMemoryRepository::refresh(Instant) { return head(); }

Revision InMemoryRepository::commit(const std::string& author, std::vector<std::string> paths,
                                    Instant at) {
  if (paths.empty()) throw Error(ErrorCode::kEmptyPaths, "a commit needs at least one path");
  std::unique_lock lock(mu_);
  const std::uint64_t seq = log_.size() + 1;
  const std::string parent = log_.empty() ? std::string(kEmptyRevisionId) : log_.back().revision.id;

  std::ostringstream content;
  content << parent << '\n' << seq << '\n' << author << '\n' << to_ms(at) << '\n';
  for (const auto& p : paths) content << p << '\n';

  Change change{Revision{sha256_hex(content.str()), seq}, author, at, std::move(paths)};
  log_.push_back(std::move(change));
  return log_.back().revision;
}

// ---------------------------------------------------------------------------
// DirectoryHashRepository

DirectoryHashRepository::DirectoryHashRepository(fs::path root, fs::path manifest)
    : root_(std::move(root)), manifest_(std::move(manifest)) {
  load_manifest();
}

void DirectoryHashRepository::load_manifest() {
  std::ifstream in(manifest_);
  if (!in) return;  // first run

  std::string line;
  if (!std::getline(in, line)) return;
  if (line != kManifestHeader) {
    throw Error(ErrorCode::kParse, "manifest " + manifest_.string() + " has unexpected header '" +
                                       line + "'");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("  ", 0) == 0) {
      if (entries_.empty()) throw Error(ErrorCode::kParse, "manifest file line before revision");
      const auto body = line.substr(2);
      const auto space = body.rfind(' ');
      if (space == std::string::npos) throw Error(ErrorCode::kParse, "bad manifest file line");
      entries_.back().files[body.substr(0, space)] = body.substr(space + 1);
      continue;
    }
    std::istringstream fields(line);
    Entry e;
    std::int64_t ms = 0;
    if (!(fields >> e.seq >> e.tree_hash >> ms) || e.seq != entries_.size() + 1) {
      throw Error(ErrorCode::kParse, "bad manifest revision line '" + line + "'");
    }
    e.at = from_ms(ms);
    entries_.push_back(std::move(e));
  }
}

void DirectoryHashRepository::check_root() const {
  std::error_code ec;
  const auto st = fs::status(root_, ec);
  if (ec || !fs::is_directory(st)) {
    throw Error(ErrorCode::kRepositoryUnreachable,
                "repository root " + root_.string() + " is not a readable directory");
  }
}

DirectoryHashRepository::FileHashes DirectoryHashRepository::scan() const {
  check_root();
  FileHashes files;
  std::error_code ec;
  const auto manifest_abs = fs::weakly_canonical(manifest_, ec);
  fs::recursive_directory_iterator it(root_, fs::directory_options::skip_permission_denied, ec);
  if (ec) {
    throw Error(ErrorCode::kRepositoryUnreachable,
                "cannot read " + root_.string() + ": " + ec.message());
  }
  for (; it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) {
      throw Error(ErrorCode::kRepositoryUnreachable,
                  "cannot read " + root_.string() + ": " + ec.message());
    }
    if (!it->is_regular_file(ec)) continue;
    std::error_code cec;
    if (fs::weakly_canonical(it->path(), cec) == manifest_abs) continue;

    std::ifstream in(it->path(), std::ios::binary);
    if (!in) {
      throw Error(ErrorCode::kRepositoryUnreachable, "cannot read " + it->path().string());
    }
    std::ostringstream content;
    content << in.rdbuf();
    files[fs::relative(it->path(), root_).generic_string()] = sha256_hex(content.str());
  }
  return files;
}

Revision DirectoryHashRepository::head() const {
  check_root();
  std::shared_lock lock(mu_);
  if (entries_.empty()) return empty_revision();
  return Revision{entries_.back().tree_hash, entries_.back().seq};
}

Change DirectoryHashRepository::change_for(std::size_t index) const {
  static const FileHashes kNone;
  const auto& prev = index == 0 ? kNone : entries_[index - 1].files;
  const auto& cur = entries_[index].files;

  Change c;
  c.revision = Revision{entries_[index].tree_hash, entries_[index].seq};
  c.author = "filesystem";
  c.timestamp = entries_[index].at;
  for (const auto& [path, hash] : cur) {
    const auto it = prev.find(path);
    if (it == prev.end() || it->second != hash) c.changed_paths.push_back(path);
  }
  for (const auto& [path, hash] : prev) {
    if (!cur.contains(path)) c.changed_paths.push_back(path);
  }
  std::sort(c.changed_paths.begin(), c.changed_paths.end());
  return c;
}

std::vector<Change> DirectoryHashRepository::changes_since(const Revision& since) const {
  check_root();
  std::shared_lock lock(mu_);
  const std::uint64_t head_seq = entries_.size();
  if (since.seq > head_seq) unknown_revision(since, head_seq);
  const auto& known =
      since.seq == 0 ? std::string(kEmptyRevisionId) : entries_[since.seq - 1].tree_hash;
  if (since.id != known) unknown_revision(since, head_seq);

  std::vector<Change> out;
  for (std::size_t i = since.seq; i < entries_.size(); ++i) out.push_back(change_for(i));
  return out;
}

Revision DirectoryHashRepository::snapshot(Instant at) {
  auto files = scan();
  std::unique_lock lock(mu_);
  const bool unchanged = entries_.empty() ? files.empty() : entries_.back().files == files;
  if (unchanged) {
    return entries_.empty() ? empty_revision()
                            : Revision{entries_.back().tree_hash, entries_.back().seq};
  }

  std::string tree;
  for (const auto& [path, hash] : files) {
    tree += path;
    tree += '\0';
    tree += hash;
    tree += '\n';
  }

  Entry e{entries_.size() + 1, sha256_hex(tree), at, std::move(files)};

  const bool fresh = !fs::exists(manifest_);
  std::ofstream out(manifest_, std::ios::app);
  if (!out) throw Error(ErrorCode::kStorageIo, "cannot write manifest " + manifest_.string());
  if (fresh) out << kManifestHeader << '\n';
  out << e.seq << ' ' << e.tree_hash << ' ' << to_ms(e.at) << '\n';
  for (const auto& [path, hash] : e.files) out << "  " << path << ' ' << hash << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::kStorageIo, "cannot write manifest " + manifest_.string());

  entries_.push_back(std::move(e));
  return Revision{entries_.back().tree_hash, entries_.back().seq};
}

// ---------------------------------------------------------------------------
// Handle helpers

RepositoryHandle make_in_memory(std::string repo_id) {
  return {std::move(repo_id), std::make_shared<InMemoryRepository>()};
}

RepositoryHandle make_directory_hash(std::string repo_id, fs::path root, fs::path manifest) {
  return {std::move(repo_id),
          std::make_shared<DirectoryHashRepository>(std::move(root), std::move(manifest))};
}

Revision head(const RepositoryHandle& repo) { return repo.repo->head(); }

std::vector<Change> changes_since(const RepositoryHandle& repo, const Revision& since) {
  return repo.repo->changes_since(since);
}

Revision refresh(const RepositoryHandle& repo, Instant now) { return repo.repo->refresh(now); }

Revision commit(const RepositoryHandle& repo, const std::string& author,
                std::vector<std::string> paths, Instant at) {
  auto* mem = dynamic_cast<InMemoryRepository*>(repo.repo.get());
  if (!mem) throw Error(ErrorCode::kInvalidArgument, repo.repo_id + " is not an in-memory repository");
  return mem->commit(author, std::move(paths), at);
}

Revision snapshot(const RepositoryHandle& repo, Instant at) {
  auto* dir = dynamic_cast<DirectoryHashRepository*>(repo.repo.get());
  if (!dir) throw Error(ErrorCode::kInvalidArgument, repo.repo_id + " is not a directory repository");
  return dir->snapshot(at);
}

}  // namespace buildherd
