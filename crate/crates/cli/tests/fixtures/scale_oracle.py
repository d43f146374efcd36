"""JSON-lines oracle: f(x) = d * x elementwise on a fixed shape, d = 2 by default.

usage: scale_oracle.py <dims like 4 or 2x3> [--diag d1,d2,...] [--bad-shape] [--noisy] [--tcp PORTFILE]
"""
import base64
import json
import random
import socket
import struct
import sys


def serve(rfile, wfile, shape, diag, bad_shape, noisy):
    for line in rfile:
        req = json.loads(line)
        op = req.get("op")
        if op == "hello":
            rep = {"ok": True, "name": "scale2", "input_shape": shape, "output_shape": shape}
        elif op == "eval":
            raw = base64.b64decode(req["data"])
            xs = struct.unpack("<%df" % (len(raw) // 4), raw)
            ys = [d * x for d, x in zip(diag, xs)]
            if noisy:
                ys = [y + random.random() * 1e-3 for y in ys]
            if bad_shape:
                ys = ys + [0.0]
            data = base64.b64encode(struct.pack("<%df" % len(ys), *ys)).decode()
            rep = {"ok": True, "id": req["id"], "data": data}
        elif op == "shutdown":
            wfile.write(json.dumps({"ok": True}) + "\n")
            wfile.flush()
            return
        else:
            rep = {"ok": False, "id": req.get("id", 0), "error": "unknown op"}
        wfile.write(json.dumps(rep) + "\n")
        wfile.flush()


def main():
    args = sys.argv[1:]
    shape = [int(d) for d in args[0].split("x")]
    bad_shape = "--bad-shape" in args
    noisy = "--noisy" in args
    n = 1
    for d in shape:
        n *= d
    diag = [2.0] * n
    if "--diag" in args:
        diag = [float(v) for v in args[args.index("--diag") + 1].split(",")]
    if "--tcp" in args:
        portfile = args[args.index("--tcp") + 1]
        srv = socket.socket()
        srv.bind(("127.0.0.1", 0))
        srv.listen(1)
        with open(portfile, "w") as f:
            f.write(str(srv.getsockname()[1]))
        conn, _ = srv.accept()
        serve(conn.makefile("r"), conn.makefile("w"), shape, diag, bad_shape, noisy)
        return
    serve(sys.stdin, sys.stdout, shape, diag, bad_shape, noisy)


if __name__ == "__main__":
    main()
