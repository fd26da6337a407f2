"""Minimal harness speaking the line protocol, for bridge tests.

Markers inside a test source change behaviour:
  # harness: hang   never answer
  # harness: crash  exit without answering
"""
import ast
import hashlib
import json
import signal
import sys
import time

VERSION = "convertest-harness/1"
if len(sys.argv) > 2 and sys.argv[1] == "--claim":
    VERSION = sys.argv[2]


class Timeout(Exception):
    pass


def on_alarm(signum, frame):
    raise Timeout()


signal.signal(signal.SIGALRM, on_alarm)


def run(payload):
    test = payload["test"]
    if "# harness: hang" in test:
        while True:
            time.sleep(60)
    if "# harness: crash" in test:
        sys.exit(3)
    lines = set()

    def tracer(frame, event, arg):
        if frame.f_code.co_filename == "<solution>" and event in ("line", "call"):
            lines.add(frame.f_lineno)
        return tracer

    started = time.monotonic()
    ns = {"__name__": "candidate"}
    signal.setitimer(signal.ITIMER_REAL, payload["timeout_ms"] / 1000.0)
    sys.settrace(tracer)
    try:
        exec(compile(payload["solution"], "<solution>", "exec"), ns)
        if payload.get("setup"):
            exec(compile(payload["setup"], "<setup>", "exec"), ns)
        exec(compile(test, "<test>", "exec"), ns)
        for name, fn in list(ns.items()):
            if name.startswith("test") and callable(fn):
                fn()
        status, diag = "pass", None
    except Timeout:
        status, diag = "timeout", "exceeded %d ms" % payload["timeout_ms"]
    except AssertionError as e:
        status, diag = "fail", "AssertionError: %s" % e
    except BaseException as e:  # noqa: BLE001
        status, diag = "error", "%s: %s" % (type(e).__name__, e)
    finally:
        sys.settrace(None)
        signal.setitimer(signal.ITIMER_REAL, 0)
    out = {"status": status, "covered_lines": sorted(lines),
           "wall_ms": int((time.monotonic() - started) * 1000)}
    if diag:
        out["diagnostic"] = diag
    return out


FLIPS = {ast.Lt: ast.GtE, ast.GtE: ast.Lt, ast.Gt: ast.LtE, ast.LtE: ast.Gt, ast.Eq: ast.NotEq, ast.NotEq: ast.Eq}


def mutants(source):
    tree = ast.parse(source)
    sites = [n for n in ast.walk(tree) if isinstance(n, ast.Compare) and type(n.ops[0]) in FLIPS]
    out = []
    for k, site in enumerate(sites):
        original = site.ops[0]
        site.ops[0] = FLIPS[type(original)]()
        out.append({"mutant_id": "relational#%d" % k, "source": ast.unparse(tree),
                    "operator": "relational", "line": site.lineno})
        site.ops[0] = original
    return out


def handle(req):
    cmd, payload = req.get("cmd"), req.get("payload") or {}
    if cmd == "version":
        return {"version": VERSION}
    if cmd == "exec":
        return run(payload)
    if cmd == "mutants":
        try:
            return {"mutants": mutants(payload["source"])}
        except SyntaxError as e:
            return {"error": "unparseable source: %s" % e}
    if cmd == "canonicalize":
        try:
            dump = ast.dump(ast.parse(payload["source"]))
        except SyntaxError as e:
            return {"error": "unparseable source: %s" % e}
        return {"key": hashlib.sha256(dump.encode()).hexdigest()}
    return {"error": "unknown command %r" % cmd}


for line in sys.stdin:
    if not line.strip():
        continue
    req = json.loads(line)
    resp = handle(req)
    resp["id"] = req.get("id")
    sys.stdout.write(json.dumps(resp) + "\n")
    sys.stdout.flush()
