"""
Write the amplitude-level sign report for the ideal TBS.

Compares the composed element chain with the printed closed-form operator
and renders the result as markdown.

Usage:
    python scripts/sign_report.py [--theta2 22.5] [--out sign_report.md]
"""
import argparse
import os
import sys

# Add the parent directory to the path so we can import oam_bench modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from oam_bench.services.circuits import sign_finding
from oam_bench.templates_config import templates


def main():
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("--theta2", type=float, default=22.5, help="HWP_II angle in degrees")
    parser.add_argument("--out", default="sign_report.md")
    args = parser.parse_args()

    finding = sign_finding(args.theta2)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(templates.get_template("sign_report.md.j2").render(finding=finding))

    print(f"Conclusion: {finding.conclusion}")
    print(f"Report written to {args.out}")


if __name__ == "__main__":
    main()
