"""Command-line entry point.

Subcommands:
  keygen    write an armored key pair and print its fingerprint
  demo      run one all-honest verification round and print the transcript
  simulate  run a scenario file, emit metrics CSV and a replayable round log
  risk      emit compromise-probability data (grid / curves / threshold)

All randomized commands accept a seed and are bit-reproducible given one.
Errors go to stderr with a nonzero exit status; data goes to files or stdout.
"""

from __future__ import annotations

import argparse
import sys

from . import codec, fileio, risk
from .chain import (
    Claim,
    ClaimTemplate,
    GenesisConfig,
    GenesisStaker,
    block_digest,
    genesis_state,
    verify_chain,
)
from .envelope import ArtifactBundle, digest, generate_identity
from .errors import ClaimstakeError
from .protocol import Agent, AgentRegistry, SubmittedTicket, run_round, ticket_claim
from .simulation import (
    TEMPLATE_CRITERIA,
    TEMPLATE_ID,
    HonestPolicy,
    collect_metrics,
    make_byte_stream,
    run_scenario,
    supporting_payload,
)

RISK_CSV_HEADER = ("n", "r_v", "r_d", "v", "d", "p_d", "feasible")


def _cmd_keygen(args) -> int:
    seed = bytes.fromhex(args.seed) if args.seed else None
    identity = generate_identity(seed)
    public_path, private_path = fileio.write_key_files(identity, args.out)
    print(identity.fingerprint.hex())
    print(f"wrote {public_path} and {private_path}", file=sys.stderr)
    return 0


def _demo_identity(rng_seed: int, index: int):
    return generate_identity(
        digest(b"demo agent" + codec.encode_u64(rng_seed) + codec.encode_u64(index))
    )


def _cmd_demo(args) -> int:
    stakers = [_demo_identity(args.rng_seed, i) for i in range(args.stakers)]
    claimants = [
        _demo_identity(args.rng_seed, args.stakers + i) for i in range(args.claimants)
    ]
    honest = HonestPolicy()
    registry = AgentRegistry(
        [Agent(identity, honest) for identity in stakers + claimants]
    )
    genesis = GenesisConfig(
        identities=tuple(
            GenesisStaker(public_key=i.public_key, stake=10) for i in stakers
        )
        + tuple(GenesisStaker(public_key=i.public_key, stake=0) for i in claimants),
        templates=(ClaimTemplate(TEMPLATE_ID, TEMPLATE_CRITERIA),),
        genesis_seed=digest(b"demo genesis" + codec.encode_u64(args.rng_seed)),
        min_stake=10,
    )
    state = genesis_state(genesis)

    claim_pool = claimants or stakers
    tickets = []
    for i in range(args.claimants):
        identity = claim_pool[i % len(claim_pool)]
        value = f"PCR-NEGATIVE-{i}"
        claim = Claim(
            template_id=TEMPLATE_ID,
            claimant=identity.fingerprint,
            nonce=i,
            asserted_value=value,
        )
        bundle = ArtifactBundle.from_payloads(
            [("lab-report.txt", supporting_payload(value))]
        )
        tickets.append(SubmittedTicket(ticket_claim(identity, claim, bundle, state)))

    seal_rng = make_byte_stream(digest(b"demo seal" + codec.encode_u64(args.rng_seed)))
    outcome, new_state = run_round(state, registry, tickets, rng=seal_rng)

    committee = outcome.committee
    print(f"round {outcome.height} committee")
    print(f"  validator  {committee.validator.short()}")
    for attestor in committee.attestors:
        print(f"  attestor   {attestor.short()}")
    print("tickets")
    for index, sub in enumerate(tickets):
        claim = sub.ticket.claim
        print(
            f"  [{index}] claimant {claim.claimant.short()} "
            f"value {claim.asserted_value} "
            f"digest {sub.ticket.package_digest.hex()[:12]}"
        )
    print("judgments")
    for judgment in outcome.judgments:
        print(
            f"  {judgment.member.short()} ticket {judgment.ticket_digest.hex()[:12]}"
            f" -> {str(judgment.verdict).lower()}"
        )
    print("attestations")
    assert outcome.block is not None
    for attestation in outcome.block.attestations:
        print(f"  {attestation.member.short()} -> {str(attestation.verdict).lower()}")
    print(f"outcome {'accepted' if outcome.accepted else 'rejected'}")
    print(f"block digest {block_digest(outcome.block).hex()}")
    print(f"claims accepted {len(outcome.block.claims)}")
    directory = registry.directory
    print(f"chain verifies {str(verify_chain(new_state, directory)).lower()}")
    return 0


def _cmd_simulate(args) -> int:
    config = fileio.load_scenario_file(
        args.config, rounds=args.rounds, rng_seed=args.rng_seed
    )
    report = run_scenario(config)
    if args.csv:
        fileio.write_metrics_csv(collect_metrics(report), args.csv)
    if args.log:
        fileio.write_round_log(fileio.round_log_events(report), args.log)
    print(f"rounds_run {report.rounds_run}")
    print(f"false_accepts {report.false_accepts}")
    print(f"honest_rejections {report.honest_rejections}")
    print(f"slash_events {report.slash_events}")
    print(f"empirical_p_d {report.empirical_p_d!r}")
    if report.early_terminated:
        print("early termination: eligible pool exhausted", file=sys.stderr)
    return 0


def _risk_rows_grid(args):
    cells = risk.risk_grid(
        args.n,
        (args.rv_min, args.rv_max),
        (args.rd_min, args.rd_max),
        args.step,
    )
    for cell in cells:
        yield (
            str(args.n),
            repr(cell.pool_ratio),
            repr(cell.disturbance_ratio),
            str(cell.pool_size),
            str(cell.colluder_count),
            "" if cell.p_disturb is None else repr(float(cell.p_disturb)),
            str(cell.feasible).lower(),
        )


def _risk_rows_curve_n(args):
    for population in range(args.n_min, args.n_max + 1, args.n_step):
        params = risk.RiskParams(
            population=population,
            pool_ratio=args.rv,
            disturbance_ratio=args.rd,
        )
        if params.feasible():
            result = risk.p_disturb_analytic(params)
            yield (
                str(population),
                repr(args.rv),
                repr(args.rd),
                str(result.pool_size),
                str(result.colluder_count),
                repr(float(result.p_disturb)),
                "true",
            )
        else:
            yield (
                str(population),
                repr(args.rv),
                repr(args.rd),
                str(params.pool_size),
                str(params.colluder_count),
                "",
                "false",
            )


def _risk_rows_curve_ratio(args):
    for population in range(args.n_min, args.n_max + 1, args.n_step):
        try:
            ratio = risk.required_pool_ratio(population, args.rd, args.target)
        except ClaimstakeError:
            ratio = None
        if ratio is None:
            yield (str(population), "", repr(args.rd), "", "", "", "false")
            continue
        params = risk.RiskParams(
            population=population, pool_ratio=ratio, disturbance_ratio=args.rd
        )
        result = risk.p_disturb_analytic(params)
        yield (
            str(population),
            repr(ratio),
            repr(args.rd),
            str(result.pool_size),
            str(result.colluder_count),
            repr(float(result.p_disturb)),
            "true",
        )


def _cmd_risk(args) -> int:
    if args.mode == "threshold":
        population = risk.min_population_for_risk(
            args.rv, args.rd, args.target, (args.n_min, args.n_max)
        )
        if population is None:
            print(
                f"no population in [{args.n_min}, {args.n_max}] keeps p_d <= "
                f"{args.target} at rv={args.rv}, rd={args.rd}"
            )
        else:
            print(population)
        return 0

    if args.mode == "grid":
        rows = list(_risk_rows_grid(args))
    elif args.mode == "curve-n":
        rows = list(_risk_rows_curve_n(args))
    else:
        rows = list(_risk_rows_curve_ratio(args))

    if args.csv:
        fileio.write_csv(args.csv, RISK_CSV_HEADER, rows)
    else:
        print(",".join(RISK_CSV_HEADER))
        for row in rows:
            print(",".join(row))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="claimstake",
        description="Committee-verified claim ledger: keys, demo round, "
        "simulation, and risk curves.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    keygen = sub.add_parser("keygen", help="generate an armored key pair")
    keygen.add_argument("--out", required=True, help="output path prefix")
    keygen.add_argument("--seed", help="hex seed for deterministic generation")
    keygen.set_defaults(func=_cmd_keygen)

    demo = sub.add_parser("demo", help="run one all-honest round")
    demo.add_argument("--claimants", type=int, default=3)
    demo.add_argument("--stakers", type=int, default=10)
    demo.add_argument("--rng-seed", type=int, default=0)
    demo.set_defaults(func=_cmd_demo)

    simulate = sub.add_parser("simulate", help="run a scenario file")
    simulate.add_argument("--config", required=True)
    simulate.add_argument("--csv", help="metrics CSV output path")
    simulate.add_argument("--log", help="replayable round log output path")
    simulate.add_argument("--rounds", type=int, help="override rounds")
    simulate.add_argument("--rng-seed", type=int, help="override rng_seed")
    simulate.set_defaults(func=_cmd_simulate)

    risk_cmd = sub.add_parser("risk", help="emit compromise-probability data")
    risk_cmd.add_argument(
        "--mode", required=True, choices=("grid", "curve-n", "curve-ratio", "threshold")
    )
    risk_cmd.add_argument("--csv", help="CSV output path (stdout if omitted)")
    risk_cmd.add_argument("--n", type=int, help="population for grid mode")
    risk_cmd.add_argument("--rv", type=float, default=0.1, help="pool ratio")
    risk_cmd.add_argument("--rd", type=float, default=0.1, help="disturbance ratio")
    risk_cmd.add_argument("--target", type=float, default=0.01)
    risk_cmd.add_argument("--n-min", type=int, default=50)
    risk_cmd.add_argument("--n-max", type=int, default=2000)
    risk_cmd.add_argument("--n-step", type=int, default=1)
    risk_cmd.add_argument("--rv-min", type=float, default=0.05)
    risk_cmd.add_argument("--rv-max", type=float, default=1.0)
    risk_cmd.add_argument("--rd-min", type=float, default=0.05)
    risk_cmd.add_argument("--rd-max", type=float, default=1.0)
    risk_cmd.add_argument("--step", type=float, default=0.05)
    risk_cmd.set_defaults(func=_cmd_risk)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "risk" and args.mode == "grid" and args.n is None:
        parser.error("risk --mode grid requires --n")
    try:
        return args.func(args)
    except ClaimstakeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
