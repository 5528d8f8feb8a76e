#!/usr/bin/env python3
"""Regenerate the bundled mini corpus (files.jsonl / repos.jsonl).

The corpus is 200 synthetic Kotlin files over 8 repositories, laid out to
exercise every pipeline stage:

  - 19 files in repositories that fail the popularity / file-count / license
    gates (5 low-star, 4 few-kotlin-files, 5 license-less, 5 copyleft)
  - 40 "planted" high-quality files carrying KDoc blocks (the hidden-quality
    group the ranking pipeline should recover)
  - 24 near-duplicate files (12 pairs, one token mutated, cross-repo)
  -  8 exact-duplicate files (4 pairs, identical bytes, cross-repo)
  - 10 files under 20 SLOC
  -  6 files containing non-ASCII bytes
  - 93 plain background files

Deterministic: rerunning this script reproduces the same JSONL bytes.
"""
import hashlib
import json
import os

HERE = os.path.dirname(os.path.abspath(__file__))

REPOS = [
    {"repo_id": "repo_low", "stars": 3, "forks": 2, "license_id": "MIT", "kotlin_file_count": 5},
    {"repo_id": "repo_fewkt", "stars": 6, "forks": 0, "license_id": "MIT", "kotlin_file_count": 4},
    {"repo_id": "repo_nolicense", "stars": 50, "forks": 10, "license_id": None, "kotlin_file_count": 5},
    {"repo_id": "repo_gpl", "stars": 30, "forks": 5, "license_id": "GPL-3.0-only", "kotlin_file_count": 5},
    {"repo_id": "repo_a", "stars": 120, "forks": 30, "license_id": "Apache-2.0", "kotlin_file_count": 67},
    {"repo_id": "repo_b", "stars": 40, "forks": 5, "license_id": "MIT", "kotlin_file_count": 51},
    {"repo_id": "repo_c", "stars": 10, "forks": 2, "license_id": "Apache-2.0", "kotlin_file_count": 42},
    {"repo_id": "repo_d", "stars": 6, "forks": 0, "license_id": "MIT", "kotlin_file_count": 21},
]


def planted(idx: int) -> str:
    return f"""/**
 * Binary search over a sorted list of ints.
 *
 * Returns the index of [target] or -1 when the value is absent.
 * Runs in O(log n) comparisons; the input must already be sorted.
 */
fun binarySearch{idx}(items: List<Int>, target: Int): Int {{
    var low = 0
    var high = items.size - 1
    while (low <= high) {{
        val mid = (low + high) / 2
        val value = items[mid]
        when {{
            value == target -> return mid
            value < target -> low = mid + 1
            else -> high = mid - 1
        }}
    }}
    return -1
}}

fun demoSearch{idx}() {{
    val data = listOf({idx}, {idx + 2}, {idx + 5}, {idx + 9}, {idx + 14})
    val extras = listOf(1, 2, 3)
    check(extras.size == 3)
    check(binarySearch{idx}(data, {idx + 5}) == 2)
    check(binarySearch{idx}(data, {idx + 1}) == -1)
    println("planted {idx}")
}}
"""


def background(idx: int) -> str:
    return f"""package com.example.app{idx}

import java.util.Locale
import kotlin.math.max

class Handler{idx}(private val limit: Int) {{
    private val cache = HashMap<Int, Int>()

    fun handle(value: Int): Int {{
        val normalized = max(0, value)
        if (cache.containsKey(normalized)) {{
            return cache.getValue(normalized)
        }}
        var total = 0
        for (step in 0 until normalized) {{
            total += step % limit
        }}
        cache[normalized] = total
        return total
    }}

    fun reset() {{
        cache.clear()
    }}

    fun describe(): String {{
        return "handler{idx} limit=" + limit.toString().lowercase(Locale.ROOT)
    }}
}}

fun useHandler{idx}(): Int {{
    val handler = Handler{idx}({max(2, idx % 31)})
    return handler.handle({idx} * 3)
}}
"""


def near_dup(pair: int, mutated: bool) -> str:
    lines = [f"fun table{pair}(): Int {{", "    var acc = 0"]
    for row in range(24):
        name = f"nd{pair}x{row}"
        if mutated and row == 12:
            lines.append(f"    val {name} = seedChanged{pair} + offset{row} * factor{row}")
        else:
            lines.append(f"    val {name} = seed{pair} + offset{row} * factor{row}")
    lines.append(f"    acc += nd{pair}x0")
    lines.append("    return acc")
    lines.append("}")
    header = "\n".join(
        [
            f"val seed{pair} = {pair * 7}",
            f"val seedChanged{pair} = {pair * 7 + 1}",
        ]
        + [f"val offset{r} = {r}" for r in range(0, 24, 6)]
        + [f"val factor{r} = {r + 2}" for r in range(0, 24, 6)]
    )
    return header + "\n" + "\n".join(lines) + "\n"


def exact_dup(pair: int) -> str:
    lines = [f"object Registry{pair} {{", "    private val names = mutableListOf<String>()"]
    for row in range(18):
        lines.append(f'    fun register{row}() = names.add("entry{pair}_{row}")')
    lines.append("    fun size(): Int = names.size")
    lines.append("}")
    return "\n".join(lines) + "\n"


def low_sloc(idx: int) -> str:
    return f"fun tiny{idx}(): Int {{\n    return {idx}\n}}\n"


def non_ascii(idx: int) -> str:
    body = [f"fun circle{idx}(radius: Double): Double {{", "    val π = 3.141592653589793"]
    for row in range(20 + idx):
        body.append(f"    val term{idx}x{row} = radius * {row + idx}.0 + c{idx}n{row}")
    body.append(f"    return π * radius * radius + term{idx}x0")
    body.append("}")
    header = "\n".join(f"val c{idx}n{row} = {row * (idx + 3)}.0" for row in range(20 + idx))
    return header + "\n" + "\n".join(body) + "\n"


def record(path: str, repo_id: str, content: str, extension: str = "kt") -> dict:
    return {
        "path": path,
        "repo_id": repo_id,
        "content": content,
        "content_hash": hashlib.sha256(content.encode()).hexdigest(),
        "size_bytes": len(content.encode()),
        "extension": extension,
    }


def build_files() -> list:
    files = []

    # files in rejected repos
    rejected = [("repo_low", 5), ("repo_fewkt", 4), ("repo_nolicense", 5), ("repo_gpl", 5)]
    serial = 1000
    for repo_id, count in rejected:
        for i in range(count):
            files.append(record(f"{repo_id}/src/File{i}.kt", repo_id, background(serial)))
            serial += 1

    # planted high-quality files
    planted_homes = [("repo_a", 15), ("repo_b", 10), ("repo_c", 10), ("repo_d", 5)]
    idx = 0
    for repo_id, count in planted_homes:
        for _ in range(count):
            files.append(record(f"{repo_id}/src/planted/Algo{idx:02}.kt", repo_id, planted(idx)))
            idx += 1

    # near-duplicate pairs: original in repo_a, mutated copy in repo_b
    for pair in range(12):
        files.append(record(f"repo_a/src/near/Orig{pair:02}.kt", "repo_a", near_dup(pair, False)))
        files.append(record(f"repo_b/src/near/Copy{pair:02}.kt", "repo_b", near_dup(pair, True)))

    # exact-duplicate pairs: repo_b holds the higher-star copy
    for pair in range(4):
        content = exact_dup(pair)
        files.append(record(f"repo_b/src/dup/Reg{pair}.kt", "repo_b", content))
        files.append(record(f"repo_c/src/vendored/Reg{pair}.kt", "repo_c", content))

    # sub-20-SLOC files
    for i in range(10):
        files.append(record(f"repo_c/src/tiny/Tiny{i}.kt", "repo_c", low_sloc(i)))

    # non-ASCII files
    for i in range(6):
        files.append(record(f"repo_d/src/math/Circle{i}.kt", "repo_d", non_ascii(i)))

    # plain background files
    homes = [("repo_a", 40), ("repo_b", 25), ("repo_c", 18), ("repo_d", 10)]
    serial = 0
    for repo_id, count in homes:
        for _ in range(count):
            if serial == 17:
                files.append(
                    record(f"{repo_id}/build.gradle.kts", repo_id, background(serial), "gradle.kts")
                )
            elif serial in (33, 61):
                files.append(
                    record(f"{repo_id}/scripts/task{serial}.kts", repo_id, background(serial), "kts")
                )
            else:
                files.append(record(f"{repo_id}/src/main/App{serial:03}.kt", repo_id, background(serial)))
            serial += 1

    assert len(files) == 200, len(files)
    assert len({f["path"] for f in files}) == 200, "paths must be unique"
    return files


def main() -> None:
    files = build_files()
    with open(os.path.join(HERE, "files.jsonl"), "w", newline="") as f:
        for item in files:
            f.write(json.dumps(item, ensure_ascii=False) + "\n")
    with open(os.path.join(HERE, "repos.jsonl"), "w", newline="") as f:
        for repo in REPOS:
            row = {k: v for k, v in repo.items() if v is not None}
            f.write(json.dumps(row) + "\n")
    print(f"wrote {len(files)} files / {len(REPOS)} repos")


if __name__ == "__main__":
    main()
