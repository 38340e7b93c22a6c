"""Command-line front end: generate, decode, rescore, tune, eval, salient, ppl.

Every subcommand is a thin composition of library operations; no score or
metric arithmetic lives here.  Exit codes: 0 success, 1 usage error, 2 data
error, 3 scorer error.  With ``--json-errors`` failures are reported on
standard error as a single JSON line.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import decoder as dec
from . import lattice as lat
from . import metrics as met
from . import rescore as rsc
from . import scoring as sco
from . import synth
from . import tuner as tun
from .errors import ScorerError
from .protocol import ProtocolScorer

SCORER_ENV = "RESCORE_SCORER"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SCORER = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Scorer construction
# ---------------------------------------------------------------------------


def _add_scorer_flags(p: argparse.ArgumentParser, prefix: str = "") -> None:
    p.add_argument(f"--{prefix}ngram-corpus", help="train the built-in n-gram scorer on this text file")
    p.add_argument(f"--{prefix}ngram-order", type=int, default=2)
    p.add_argument(f"--{prefix}scorer-cmd", help="spawn this command as a wire-protocol scorer")
    p.add_argument(f"--{prefix}scorer-tcp", metavar="HOST:PORT", help="connect to a wire-protocol scorer over TCP")
    p.add_argument(f"--{prefix}scorer-timeout", type=float, default=30.0, help="protocol response timeout in seconds")


def resolve_scorer_spec(args, prefix: str = "", allow_env: bool = True):
    """Validate that exactly one scorer spec is present; no work happens yet.

    Returns (kind, value, order) with kind in {"ngram", "cmd", "tcp"}.  The
    RESCORE_SCORER environment variable overrides the endpoint when allowed.
    """
    attr = lambda name: getattr(args, (prefix + name).replace("-", "_"))
    corpus, cmd, tcp = attr("ngram-corpus"), attr("scorer-cmd"), attr("scorer-tcp")
    env = os.environ.get(SCORER_ENV) if allow_env else None
    if env:
        if env.startswith("cmd:"):
            corpus, cmd, tcp = None, env[4:], None
        elif env.startswith("tcp:"):
            corpus, cmd, tcp = None, None, env[4:]
        else:
            raise UsageError(f"{SCORER_ENV} must look like 'cmd:...' or 'tcp:host:port'")
    chosen = [x for x in (corpus, cmd, tcp) if x]
    if len(chosen) != 1:
        raise UsageError(
            "exactly one scorer spec is required (--*ngram-corpus, --*scorer-cmd, or --*scorer-tcp)"
        )
    timeout = attr("scorer-timeout")
    if corpus:
        if not Path(corpus).is_file():
            raise FileNotFoundError(f"scorer corpus not found: {corpus}")
        return ("ngram", corpus, attr("ngram-order"), timeout)
    if cmd:
        return ("cmd", cmd, None, timeout)
    host, _, port = tcp.rpartition(":")
    if not host or not port.isdigit():
        raise UsageError(f"bad --scorer-tcp value {tcp!r}")
    return ("tcp", (host, int(port)), None, timeout)


def build_scorer(spec):
    kind, value, order, timeout = spec
    if kind == "ngram":
        sentences = Path(value).read_text(encoding="utf-8").splitlines()
        return sco.ngram_train([s for s in sentences if s.strip()], order)
    if kind == "cmd":
        return ProtocolScorer.spawn(value, timeout=timeout)
    host, port = value
    return ProtocolScorer.connect(host, port, timeout=timeout)


def _close_scorer(scorer) -> None:
    if isinstance(scorer, ProtocolScorer):
        scorer.close()


# ---------------------------------------------------------------------------
# Shared input plumbing
# ---------------------------------------------------------------------------


def _read_refs(path) -> dict[str, str]:
    refs: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        obj = json.loads(line)
        if not isinstance(obj, dict) or set(obj) != {"doc_id", "text"}:
            raise lat.LatticeFormatError(f"{path}:{lineno}: expected {{'doc_id', 'text'}} objects")
        refs[obj["doc_id"]] = obj["text"]
    if not refs:
        raise lat.LatticeFormatError(f"{path}: no reference lines")
    return refs


def _emission_files(path: Path) -> list[Path]:
    if path.is_dir():
        files = sorted(path.glob("*.json"))
        if not files:
            raise lat.LatticeFormatError(f"{path}: no *.json emission files")
        return files
    return [path]


def _build_label_lm(args, vocab) -> dec.LabelLM:
    if args.label_lm == "uniform":
        return dec.LabelLM.uniform(vocab, order=1)
    if not args.label_lm_corpus:
        raise UsageError("--label-lm ngram requires --label-lm-corpus")
    sentences = Path(args.label_lm_corpus).read_text(encoding="utf-8").splitlines()
    return dec.LabelLM.train([s for s in sentences if s.strip()], vocab, order=args.label_lm_order)


def _decode_one(task):
    utt_id, emissions, label_lm, config, ref = task
    utt, _ = dec.decode_utterance(
        emissions, label_lm, config, utterance_id=utt_id, reference=ref
    )
    return utt


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    out = Path(args.out)
    (out / "emissions").mkdir(parents=True, exist_ok=True)
    corpus = synth.make_synthetic_corpus(
        seed=args.seed,
        n_utterances=args.utterances,
        segments_per_utterance=args.segments,
        tokens_per_segment=(args.min_tokens, args.max_tokens),
        noise=args.noise,
        confusion=args.confusion,
        vocab_size=args.vocab_size,
        corpus_sentences=args.corpus_sentences,
    )
    with open(out / "refs.jsonl", "w", encoding="utf-8") as fh:
        for utt in corpus.utterances:
            fh.write(json.dumps({"doc_id": utt.utterance_id, "text": " ".join(utt.reference)}))
            fh.write("\n")
    (out / "corpus.txt").write_text("\n".join(corpus.train_corpus) + "\n", encoding="utf-8")
    for utt in corpus.utterances:
        dec.write_emissions(out / "emissions" / f"{utt.utterance_id}.json", utt.emissions)
    meta = {
        "seed": args.seed,
        "utterances": args.utterances,
        "segments_per_utterance": args.segments,
        "tokens_per_segment": [args.min_tokens, args.max_tokens],
        "noise": args.noise,
        "confusion": args.confusion,
        "vocab_size": args.vocab_size,
        "corpus_sentences": args.corpus_sentences,
    }
    (out / "gen_meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    print(f"gen: wrote {len(corpus.utterances)} utterances under {out}")
    return EXIT_OK


def cmd_decode(args) -> int:
    refs = _read_refs(args.refs) if args.refs else {}
    files = _emission_files(Path(args.emissions))
    fusion = None
    fusion_scorer = None
    if args.fusion_weight is not None:
        spec = resolve_scorer_spec(args, prefix="fusion-", allow_env=False)
        fusion_scorer = build_scorer(spec)
        fusion = dec.FusionConfig(
            scorer=fusion_scorer, weight=args.fusion_weight, ilm_weight=args.fusion_ilm_weight
        )
    try:
        tasks = []
        label_lm = None
        for path in files:
            emissions = dec.read_emissions(path)
            utt_id = path.stem
            if label_lm is None:
                vocab = [t for t in emissions[0].vocab if t != emissions[0].blank]
                label_lm = _build_label_lm(args, vocab)
            ref = refs[utt_id].split() if utt_id in refs else None
            config = dec.DecoderConfig(
                beam_size=args.beam,
                label_context=args.label_context,
                merge_states=args.merge,
                label_lm_weight=args.label_lm_weight,
                fusion=fusion,
            )
            tasks.append((utt_id, emissions, label_lm, config, ref))
        if args.jobs > 1 and fusion is None:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                utts = list(pool.map(_decode_one, tasks))
        else:
            utts = []
            for task in tasks:
                utts.append(_decode_one(task))
                if args.verbose:
                    print(f"decoded {task[0]}", file=sys.stderr)
    finally:
        if fusion_scorer is not None:
            _close_scorer(fusion_scorer)

    lat.write_utterances(utts, args.out)
    n_segments = sum(len(u.segments) for u in utts)
    print(f"decode: {len(utts)} utterances, {n_segments} segments -> {args.out}")
    paths = met.avg_paths_per_segment(utts)
    print("lattice quality")
    print(f"  paths/segment  {met.format_count(paths)}")
    if refs:
        scored = [u for u in utts if u.reference]
        pairs = [(u.reference, rsc.first_pass_transcript(u)) for u in scored]
        w = met.wer(pairs)
        onum = sum(met.oracle_wer(lat.concat(u), u.reference) * len(u.reference) for u in scored)
        print(f"  wer            {w.wer:.4f}")
        print(f"  oracle_wer     {onum / w.ref_words:.4f}")
    return EXIT_OK


def _params_from_args(args) -> rsc.RescoreParams:
    mu, nu = args.mu, args.nu
    nbest, ctx = args.nbest, args.context_segments
    if getattr(args, "params_from", None):
        surf = tun.load_surface(args.params_from)
        mu, nu = surf["best"]["mu"], surf["best"]["nu"]
        nbest = surf.get("nbest", nbest)
        ctx = surf.get("context_segments", ctx)
    return rsc.RescoreParams(mu=mu, nu=nu, nbest=nbest, context_segments=ctx)


def cmd_rescore(args) -> int:
    spec = resolve_scorer_spec(args)
    utts = lat.read_utterances(args.lattices)
    params = _params_from_args(args)
    scorer = build_scorer(spec)
    try:
        results = []
        for u in utts:
            results.append(rsc.rescore_utterance(u, scorer, params))
            if args.verbose:
                print(f"rescored {u.utterance_id}", file=sys.stderr)
    finally:
        _close_scorer(scorer)
    rsc.write_transcripts(results, args.out)
    print(
        f"rescore: {len(results)} utterances at mu={params.mu:g} nu={params.nu:g} -> {args.out}"
    )
    return EXIT_OK


def cmd_tune(args) -> int:
    spec = resolve_scorer_spec(args)
    utts = lat.read_utterances(args.lattices)
    dev = []
    for utt in utts:
        if utt.reference is None:
            raise lat.LatticeFormatError(
                f"utterance {utt.utterance_id!r} has no reference; tune needs references"
            )
        dev.append((utt, utt.reference))
    grid = tun.TuneGrid(
        tuple(float(x) for x in args.mu_grid.split(",")),
        tuple(float(x) for x in args.nu_grid.split(",")),
    )
    base = rsc.RescoreParams(nbest=args.nbest, context_segments=args.context_segments)
    scorer = build_scorer(spec)
    try:
        result = tun.tune(dev, scorer, grid, base)
        print(tun.surface_table(result, grid))
        if args.eval_lattices:
            eval_utts = lat.read_utterances(args.eval_lattices)
            eval_set = [(u, u.reference) for u in eval_utts if u.reference is not None]
            params = rsc.RescoreParams(
                mu=result.best_mu, nu=result.best_nu,
                nbest=base.nbest, context_segments=base.context_segments,
            )
            report = tun.apply_params(eval_set, scorer, params)
            result.eval_wer = report.wer
            print(f"eval: wer={report.wer:.4f} at mu={result.best_mu:g} nu={result.best_nu:g}")
            if args.eval_report:
                Path(args.eval_report).write_text(
                    json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
                )
    finally:
        _close_scorer(scorer)
    tun.save_surface(result, grid, base, args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    refs = _read_refs(args.refs)
    transcripts = rsc.read_transcripts(args.transcripts)
    pairs = []
    for t in transcripts:
        if t.utterance_id not in refs:
            raise lat.LatticeFormatError(f"no reference for utterance {t.utterance_id!r}")
        ref = met.tokenize(refs[t.utterance_id], args.lowercase)
        hyp = met.tokenize(t.transcript_text, args.lowercase)
        pairs.append((t.utterance_id, ref, hyp))
    w = met.wer([(r, h) for _, r, h in pairs])
    report = met.EvalReport(
        wer=w.wer,
        ref_words=w.ref_words,
        substitutions=w.substitutions,
        deletions=w.deletions,
        insertions=w.insertions,
        num_utterances=len(pairs),
    )
    per_doc = []
    for doc_id, ref, hyp in pairs:
        dw = met.wer([(ref, hyp)])
        per_doc.append({"doc_id": doc_id, "wer": dw.wer, "ref_words": dw.ref_words})
    report.per_document = per_doc
    if args.salient:
        terms = met.SalientTermSet.load(args.salient)
        s = met.ster(pairs, terms)
        report.ster = s.ster
        report.salient_total = s.total_occurrences
        report.salient_errors = s.errored_occurrences
    if args.lattices:
        utts = lat.read_utterances(args.lattices)
        report.avg_paths_per_segment = met.avg_paths_per_segment(utts)
        report.num_segments = sum(len(u.segments) for u in utts)
        with_ref = [u for u in utts if u.reference is not None]
        if with_ref:
            onum = sum(
                met.oracle_wer(lat.concat(u), u.reference) * len(u.reference) for u in with_ref
            )
            report.oracle_wer = onum / sum(len(u.reference) for u in with_ref)
    out = report.to_dict()
    Path(args.out).write_text(json.dumps(out, indent=2) + "\n", encoding="utf-8")
    if args.csv:
        lines = ["metric,value"]
        for key in ("wer", "oracle_wer", "ster", "avg_paths_per_segment"):
            if out[key] is not None:
                lines.append(f"{key},{out[key]}")
        Path(args.csv).write_text("\n".join(lines) + "\n", encoding="utf-8")
    shown = {k: out[k] for k in ("wer", "oracle_wer", "ster") if out[k] is not None}
    print("eval: " + " ".join(f"{k}={v:.4f}" for k, v in shown.items()))
    return EXIT_OK


def cmd_salient(args) -> int:
    refs = _read_refs(args.refs)
    term_set = met.salient_terms(sorted(refs.items()), args.fraction, lowercase=args.lowercase)
    term_set.save(args.out)
    n_terms = sum(len(v) for v in term_set.documents.values())
    print(f"salient: {n_terms} terms over {len(term_set.documents)} documents -> {args.out}")
    return EXIT_OK


def cmd_ppl(args) -> int:
    spec = resolve_scorer_spec(args)
    texts = [
        line for line in Path(args.text).read_text(encoding="utf-8").splitlines() if line.strip()
    ]
    scorer = build_scorer(spec)
    try:
        value = sco.log_perplexity_per_word(scorer, texts)
    finally:
        _close_scorer(scorer)
    payload = {"log_perplexity_per_word": value, "texts": len(texts)}
    print(json.dumps(payload))
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def make_parser() -> _Parser:
    parser = _Parser(prog="latrescore", description=__doc__)
    parser.add_argument("--json-errors", action="store_true", help="emit errors as one JSON line on stderr")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="per-utterance progress on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a seeded synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--utterances", type=int, default=10)
    p.add_argument("--segments", type=int, default=3)
    p.add_argument("--min-tokens", type=int, default=6)
    p.add_argument("--max-tokens", type=int, default=10)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--confusion", type=float, default=0.25)
    p.add_argument("--vocab-size", type=int, default=12)
    p.add_argument("--corpus-sentences", type=int, default=400)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("decode", help="beam-search emissions into segment lattices")
    p.add_argument("--emissions", required=True, help="emission file or directory of *.json files")
    p.add_argument("--out", required=True)
    p.add_argument("--refs", help="reference JSON lines; enables the quality block")
    p.add_argument("--beam", type=int, default=8)
    p.add_argument("--label-context", type=int, default=2)
    p.add_argument("--merge", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--label-lm-weight", type=float, default=0.3)
    p.add_argument("--label-lm", choices=["uniform", "ngram"], default="uniform")
    p.add_argument("--label-lm-corpus")
    p.add_argument("--label-lm-order", type=int, default=2)
    p.add_argument("--fusion-weight", type=float, default=None)
    p.add_argument("--fusion-ilm-weight", type=float, default=0.0)
    _add_scorer_flags(p, prefix="fusion-")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("rescore", help="apply an external scorer to lattices")
    p.add_argument("--lattices", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--nu", type=float, default=0.0)
    p.add_argument("--nbest", type=int, default=20)
    p.add_argument("--context-segments", type=int, default=1)
    p.add_argument("--params-from", help="take mu/nu (and nbest/context) from a tune surface file")
    _add_scorer_flags(p)
    p.set_defaults(func=cmd_rescore)

    p = sub.add_parser("tune", help="grid-search (mu, nu) on a dev set")
    p.add_argument("--lattices", required=True, help="dev lattices with embedded references")
    p.add_argument("--out", required=True, help="surface JSON output")
    p.add_argument("--mu-grid", default="0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    p.add_argument("--nu-grid", default="0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    p.add_argument("--nbest", type=int, default=20)
    p.add_argument("--context-segments", type=int, default=1)
    p.add_argument("--eval-lattices", help="optionally apply the tuned point to this eval set")
    p.add_argument("--eval-report", help="where to write the eval-set report JSON")
    _add_scorer_flags(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("eval", help="score transcripts against references")
    p.add_argument("--transcripts", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="also write a flat metric,value table")
    p.add_argument("--salient", help="salient-term file; enables STER")
    p.add_argument("--lattices", help="lattice file; enables oracle WER and paths/segment")
    p.add_argument("--lowercase", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("salient", help="extract per-document salient terms")
    p.add_argument("--refs", required=True)
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.add_argument("--lowercase", action="store_true")
    p.set_defaults(func=cmd_salient)

    p = sub.add_parser("ppl", help="log perplexity per word of a text file")
    p.add_argument("--text", required=True)
    p.add_argument("--out")
    _add_scorer_flags(p)
    p.set_defaults(func=cmd_ppl)

    return parser


def _report_error(args_ns, kind: str, exc: Exception) -> None:
    if args_ns is not None and getattr(args_ns, "json_errors", False):
        line = json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)})
        print(line, file=sys.stderr)
    else:
        print(f"latrescore: {kind} error: {exc}", file=sys.stderr)


def main(argv=None) -> int:
    parser = make_parser()
    args = None
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        _report_error(args, "usage", exc)
        return EXIT_USAGE
    except ScorerError as exc:
        _report_error(args, "scorer", exc)
        return EXIT_SCORER
    except (ValueError, OSError, json.JSONDecodeError, RuntimeError) as exc:
        _report_error(args, "data", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
