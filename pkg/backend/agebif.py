#!/usr/bin/env python
"""
agebif command-line entry point.

    agebif <normalize|semitrivial|bifpoints|branch|simulate> --config <path> [--out <dir>] [flags]

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

COMMANDS = ('normalize', 'semitrivial', 'bifpoints', 'branch', 'simulate')


def main(argv=None):
    argv = list(sys.argv if argv is None else argv)
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'config.settings')
    from django.core.management import execute_from_command_line

    if len(argv) < 2 or argv[1] not in COMMANDS:
        sys.stderr.write(f"usage: agebif <{'|'.join(COMMANDS)}> --config <path> [--out <dir>]\n")
        return 2
    execute_from_command_line(argv)
    return 0


if __name__ == '__main__':
    sys.exit(main())
