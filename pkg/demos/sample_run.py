"""Run the bundled 30-node scenario for 20 emulated seconds and print per-flow results."""
import sys
import tempfile

from wnetlab import sample_path
from wnetlab.orchestrator import run_scenario

out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="wnetlab-")
report = run_scenario(sample_path(), out, {"duration": 20})
trace = report.trace

print(f"startup {report.startup_s * 1000:.1f} ms, {len(trace.packets)} packets, "
      f"conservation {'holds' if trace.conservation_holds() else 'BROKEN'}")
for s in report.summary.flows.values():
    lat = f"{s.mean_latency_s * 1000:.2f} ms" if s.mean_latency_s is not None else "-"
    print(f"  flow {s.flow_id} {s.app:5} {s.src:2d}->{s.dst:2d}  sent {s.sent:5d}  "
          f"loss {s.loss_rate:6.1%}  {s.throughput_bps / 1e3:9.1f} kbit/s  latency {lat}")
print(f"report written to {out}/report")
