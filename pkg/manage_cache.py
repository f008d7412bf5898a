"""
Eigen cache maintenance: inspect, clear or drop single entries
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent / "src"))

from eigen_cache import EigenCache


def show(cache: EigenCache, _args) -> int:
    cache.print_stats()
    print("\n📋 Cached eigendata:")
    for key, info in cache.index.items():
        meta = info.get("metadata", {})
        print(
            f"   • {key[:16]}  dim={info['dimension']} k={info['n_values']} "
            f"mode={meta.get('mode', '-')} sector={meta.get('name', '-')}  ({info['cached_at']})"
        )
    return 0


def clear(cache: EigenCache, args) -> int:
    if not args.yes:
        print(f"⚠️  About to delete {len(cache.index)} cached eigensystems in {cache.cache_dir}")
        if input("Continue? (yes/no): ").strip().lower() != "yes":
            print("❌ Cancelled")
            return 1
    print(f"✅ Cache cleared ({cache.clear_all()} entries)")
    return 0


def invalidate(cache: EigenCache, args) -> int:
    matches = [key for key in cache.index if key.startswith(args.key)]
    if len(matches) != 1:
        print(f"❌ {len(matches)} entries match '{args.key}', need exactly one")
        return 2
    cache.invalidate(matches[0])
    print(f"✅ Invalidated {matches[0][:16]}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Manage the eigenpair cache")
    parser.add_argument("--cache-dir", help="cache directory (default: METASTAB_CACHE_DIR)")
    sub = parser.add_subparsers(dest="action", required=True)
    sub.add_parser("stats", help="hit counters and cached entries").set_defaults(func=show)
    p = sub.add_parser("clear", help="delete every cached eigensystem")
    p.add_argument("--yes", action="store_true", help="skip the confirmation prompt")
    p.set_defaults(func=clear)
    p = sub.add_parser("invalidate", help="drop one entry")
    p.add_argument("key", help="cache key or unique prefix")
    p.set_defaults(func=invalidate)

    args = parser.parse_args(argv)
    return args.func(EigenCache(args.cache_dir), args)


if __name__ == "__main__":
    sys.exit(main())
