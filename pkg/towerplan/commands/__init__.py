# Commands Package
# Each module exposes register(subparsers, parent) and handle(args) -> exit status.
