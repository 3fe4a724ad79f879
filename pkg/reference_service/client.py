"""Example client for microsoft/resnet-50 (image-classification).

Checks service health, sends one inference request and prints the result.
Doubles as the request template for pressure testing: infer() is importable.
"""

import argparse
import json
import urllib.request

SAMPLE_INPUT = [1, 2, 3, 4]


def get_json(url):
    with urllib.request.urlopen(url, timeout=5) as response:
        return json.loads(response.read().decode("utf-8"))


def post_json(url, payload):
    data = json.dumps(payload).encode("utf-8")
    request = urllib.request.Request(
        url, data=data, headers={"Content-Type": "application/json"}
    )
    with urllib.request.urlopen(request, timeout=30) as response:
        return json.loads(response.read().decode("utf-8"))


def infer(endpoint, vector):
    return post_json(f"{endpoint}/infer", {"input": vector})


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--endpoint", default="http://127.0.0.1:8080")
    args = parser.parse_args()

    health = get_json(f"{args.endpoint}/health")
    print("health:", health["status"])
    result = infer(args.endpoint, SAMPLE_INPUT)
    print("output:", result["output"])
    print("inference_ms:", round(result["inference_ms"], 3))


if __name__ == "__main__":
    main()
