"""Print the single-measurement MAP versus posterior-mean check as JSON."""

import json

from rkhsbayes.oracle import example_check

if __name__ == "__main__":
    print(json.dumps(example_check().to_dict(), indent=2))
