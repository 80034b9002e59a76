"""Command-line surface: extract, validate, refine, infer, eval, review.

Commands exit 0 on success and 2 on contract errors (bad corpus lines,
missing clusters in strict mode, unreadable files). All outputs are UTF-8
and written atomically.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import zlib

from .backend import LMBackend
from .config import PipelineConfig
from .core import STATUS_APPROVED, STATUS_REJECTED, cluster_key
from .corpus import CorpusRecord, load_corpus
from .errors import TemplmError
from .evaluation import (
    FaithfulnessReport,
    PhraseTable,
    audit_lexicalized,
    bleu,
    load_starter_table,
    rouge_l,
)
from .extraction import RecombinationPlan, extract_initial, recombine
from .inference import realize
from .ngram import NGramBackend, NGramModel, train_ngram
from .refinement import heuristic_chunker, refine
from .remote import RemoteBackend
from .templateset import TemplateSet
from .validation import template_generalizability, validate_cluster

BRIDGE_URL_ENV = "TEMPLM_BRIDGE_URL"


def _atomic_write(path: str, payload: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_jsonl(path: str, rows: list[dict]) -> None:
    _atomic_write(path, "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))


def make_backend(
    config: PipelineConfig,
    records: list[CorpusRecord] | None = None,
    override: str | None = None,
) -> LMBackend:
    """Resolve the scoring backend from config, flag override, and env."""
    env_url = os.environ.get(BRIDGE_URL_ENV)
    if override:
        if override.startswith("remote:"):
            return RemoteBackend(env_url or override[len("remote:"):])
        if override.startswith(("http://", "https://")):
            return RemoteBackend(env_url or override)
        if override.startswith("ngram:"):
            return NGramBackend(NGramModel.load(override[len("ngram:"):]))
        return NGramBackend(NGramModel.load(override))
    be = config.backend
    if be.kind == "remote":
        url = env_url or be.url
        if not url:
            raise TemplmError("remote backend needs a url (config or TEMPLM_BRIDGE_URL)")
        return RemoteBackend(url)
    if be.model:
        return NGramBackend(NGramModel.load(be.model))
    rows = None
    if be.train:
        train_records, _ = load_corpus(be.train, config.augmentation)
        rows = [(r.data, r.text) for r in train_records if r.text is not None]
    elif records is not None:
        rows = [(r.data, r.text) for r in records if r.text is not None]
    if not rows:
        raise TemplmError(
            "n-gram backend needs training text: give backend.model, backend.train, "
            "or a corpus with 'text' fields"
        )
    return NGramBackend(train_ngram(rows, order=be.order, discount=be.discount))


def _load_inputs(args, config: PipelineConfig):
    records, added = load_corpus(args.corpus, config.augmentation)
    policy = config.policy(exclude=added)
    return records, policy


def _group_by_cluster(records, policy):
    clusters: dict = {}
    for rec in records:
        clusters.setdefault(cluster_key(rec.data, policy), []).append(rec)
    return dict(sorted(clusters.items(), key=lambda kv: kv[0].canonical()))


def cmd_extract(args) -> int:
    config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        config = PipelineConfig.from_dict({**config.to_dict(), "seed": args.seed})
    records, policy = _load_inputs(args, config)
    backend = make_backend(config, records, args.backend)
    ts = TemplateSet(policy=policy, config=config.to_dict())
    for key, cluster_records in _group_by_cluster(records, policy).items():
        examples = [r.data for r in cluster_records]
        plan = RecombinationPlan(
            cluster=key,
            target_count=max(config.recombination_target, len(examples)),
            swap_fields=frozenset(
                f for f in examples[0].fields() if f not in policy.exclude
            ),
            seed=config.seed ^ zlib.crc32(key.canonical().encode("utf-8")),
        )
        grown = recombine(examples, plan)
        ts.add(extract_initial(grown, backend, config.beam_k, config.max_len, cluster=key))
    ts.save(args.out)
    if args.save_backend and isinstance(backend, NGramBackend):
        backend.model.save(args.save_backend)
    print(f"extracted {ts.template_count()} candidate templates "
          f"in {len(ts.clusters)} clusters -> {args.out}")
    return 0


def cmd_validate(args) -> int:
    config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    records, policy = _load_inputs(args, config)
    backend = make_backend(config, records, args.backend)
    ts = TemplateSet.load(args.set)
    out = TemplateSet(policy=ts.policy, config=ts.config)
    report_rows: list[dict] = []
    clusters = _group_by_cluster(records, ts.policy)
    for key in ts.cluster_keys():
        cluster_records = clusters.get(key)
        if not cluster_records:
            continue
        examples = [r.data for r in cluster_records]
        survivors, ranking = validate_cluster(
            ts.clusters[key], examples, backend, config.effective_top_k()
        )
        out.add(survivors)
        for rank, (t, score) in enumerate(ranking):
            out_score = {"total": score.total, "mean": score.mean}
            if any(s.id == t.id for s in survivors):
                out.scores[t.id] = out_score
            report_rows.append(
                {
                    "cluster": key.canonical(),
                    "rank": rank,
                    "template_id": t.id,
                    "tokens": t.surface(),
                    "total": score.total,
                    "mean": score.mean,
                    "kept": rank < len(survivors),
                }
            )
    out.save(args.out)
    if args.report:
        _write_jsonl(args.report, report_rows)
    print(f"validated {out.template_count()} templates -> {args.out}")
    return 0


def cmd_refine(args) -> int:
    config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    records, policy = _load_inputs(args, config)
    backend = make_backend(config, records, args.backend)
    ts = TemplateSet.load(args.set)
    sidecar: dict[str, list] = {}
    if args.parse_sidecar:
        with open(args.parse_sidecar, encoding="utf-8") as fh:
            sidecar = json.load(fh)
    out = TemplateSet(policy=ts.policy, config=ts.config)
    clusters = _group_by_cluster(records, ts.policy)
    changed = 0
    for key in ts.cluster_keys():
        cluster_records = clusters.get(key)
        examples = [r.data for r in cluster_records] if cluster_records else []
        seen = set()
        for t in ts.clusters[key]:
            refined = t
            if examples and t.status != STATUS_REJECTED:
                spans = sidecar.get(t.id)
                if spans is None:
                    parser = heuristic_chunker
                else:
                    parser = lambda toks, s=spans: [tuple(x) for x in s]  # noqa: E731
                refined = refine(
                    t,
                    examples,
                    backend,
                    parser=parser,
                    threshold=config.refine_threshold,
                    k=config.beam_k,
                    max_len=config.cbs_max_len,
                )
                if refined.tokens != t.tokens:
                    changed += 1
            if refined.tokens in seen:
                continue
            seen.add(refined.tokens)
            out.add([refined])
            if examples:
                score = template_generalizability(refined, examples, backend)
                out.scores[refined.id] = {"total": score.total, "mean": score.mean}
    out.save(args.out)
    print(f"refined {changed} of {ts.template_count()} templates -> {args.out}")
    return 0


def cmd_infer(args) -> int:
    config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    records, _ = load_corpus(args.corpus, config.augmentation)
    backend = make_backend(config, records, args.backend)
    ts = TemplateSet.load(args.set)
    rows = []
    for rec in records:
        out, t, score = realize(rec.data, ts, backend, fallback=args.fallback)
        rows.append(
            {
                "id": rec.id,
                "output": out.text,
                "template_id": t.id,
                "logprob": score,
            }
        )
    _write_jsonl(args.out, rows)
    print(f"realized {len(rows)} inputs -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    records, added = load_corpus(args.corpus, config.augmentation)
    by_id = {r.id: r for r in records}
    table = PhraseTable.load(args.table) if args.table else load_starter_table()
    outputs: list[dict] = []
    with open(args.outputs, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                outputs.append(json.loads(line))
    report = FaithfulnessReport()
    candidates, references = [], []
    rows: list[dict] = []
    for row in outputs:
        rec = by_id.get(str(row.get("id")))
        if rec is None:
            continue
        out_text = str(row.get("output", ""))
        entry = report.add(rec.id, out_text, rec.data, table, skip_fields=added)
        rows.append(entry)
        if rec.text:
            candidates.append(out_text)
            references.append([rec.text])
    summary = report.summary()
    if candidates:
        summary["BLEU"] = bleu(candidates, references)
        summary["ROUGE_L"] = rouge_l(candidates, references)
    if args.set:
        ts = TemplateSet.load(args.set)
        summary["lexicalized_fraction"] = audit_lexicalized(
            ts, table, [r.data for r in records]
        )
    rows.append({"summary": summary})
    if args.report:
        _write_jsonl(args.report, rows)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_review(args) -> int:
    ts = TemplateSet.load(args.set)
    if args.list:
        for key in ts.cluster_keys():
            print(f"cluster {key.canonical()}")
            for t in ts.clusters[key]:
                score = ts.scores.get(t.id, {})
                total = score.get("total")
                shown = f" total={total:.4f}" if isinstance(total, float) else ""
                print(f"  {t.id} [{t.status}]{shown} {t.surface()}")
        return 0
    decisions: dict[str, dict] = {}
    if args.decisions:
        with open(args.decisions, encoding="utf-8") as fh:
            raw = json.load(fh)
        for template_id, decision in raw.items():
            if isinstance(decision, str):
                decisions[template_id] = {"action": decision}
            else:
                decisions[template_id] = dict(decision)
    if args.approve_all:
        for t in ts.all_templates():
            if t.status != STATUS_REJECTED:
                decisions.setdefault(t.id, {"action": "approve"})
    for template_id, decision in sorted(decisions.items()):
        action = decision.get("action")
        status = {"approve": STATUS_APPROVED, "reject": STATUS_REJECTED}.get(action or "")
        if status is None:
            print(f"warning: unknown action {action!r} for {template_id}", file=sys.stderr)
            continue
        if not ts.set_status(template_id, status, decision.get("note")):
            print(f"warning: unknown template id {template_id}", file=sys.stderr)
    ts.save(args.out or args.set)
    counts: dict[str, int] = {}
    for t in ts.all_templates():
        counts[t.status] = counts.get(t.status, 0) + 1
    print(json.dumps(counts, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="templm",
        description="Distill a conditional LM into a template-based generator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, corpus=True):
        p.add_argument("--config", help="pipeline config JSON")
        p.add_argument("--backend", help="backend override: ngram:<model.json> or a bridge URL")
        p.add_argument("--seed", type=int, help="override config seed")
        if corpus:
            p.add_argument("--corpus", required=True, help="JSONL corpus")

    p = sub.add_parser("extract", help="cluster, recombine, generate, delexicalize")
    common(p)
    p.add_argument("--out", required=True, help="template set file to write")
    p.add_argument("--save-backend", help="persist the trained n-gram model here")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("validate", help="rank candidates by cluster generalizability")
    common(p)
    p.add_argument("--set", required=True, help="template set from extract")
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="JSONL ranking report")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("refine", help="repair ungeneralizable spans by consensus search")
    common(p)
    p.add_argument("--set", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--parse-sidecar", help="JSON template-id -> [[start, end], ...]")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("infer", help="realize templates for new inputs")
    common(p)
    p.add_argument("--set", required=True)
    p.add_argument("--out", required=True)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="fallback", action="store_false",
                      help="fail on unseen clusters (default)")
    mode.add_argument("--fallback", dest="fallback", action="store_true",
                      help="borrow the largest field-subset cluster")
    p.set_defaults(func=cmd_infer, fallback=False)

    p = sub.add_parser("eval", help="faithfulness and reference metrics")
    common(p)
    p.add_argument("--outputs", required=True, help="JSONL from infer")
    p.add_argument("--table", help="phrase table JSON (default: built-in starter)")
    p.add_argument("--set", help="template set for the lexicalization audit")
    p.add_argument("--report", help="JSONL per-example report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("review", help="apply human approve/reject decisions")
    p.add_argument("--set", required=True)
    p.add_argument("--out", help="write here instead of in place")
    p.add_argument("--decisions", help="JSON template-id -> approve|reject")
    p.add_argument("--approve-all", action="store_true",
                   help="approve everything not rejected")
    p.add_argument("--list", action="store_true", help="print templates and exit")
    p.set_defaults(func=cmd_review)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TemplmError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
