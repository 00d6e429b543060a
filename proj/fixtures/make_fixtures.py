#!/usr/bin/env python3
"""Regenerates the fixture SQLite databases and Spider-style manifest.

The generated files are checked in; rerun only when the fixtures change.
"""
import json
import os
import sqlite3

HERE = os.path.dirname(os.path.abspath(__file__))
DB_ROOT = os.path.join(HERE, "spider", "database")


def fresh(db_id):
    os.makedirs(os.path.join(DB_ROOT, db_id), exist_ok=True)
    path = os.path.join(DB_ROOT, db_id, db_id + ".sqlite")
    if os.path.exists(path):
        os.remove(path)
    return sqlite3.connect(path)


def make_shop():
    con = fresh("shop")
    con.executescript(
        """
        CREATE TABLE customers (
            id INTEGER PRIMARY KEY,
            name TEXT NOT NULL,
            email TEXT,
            signup_date TEXT
        );
        CREATE TABLE products (
            id INTEGER PRIMARY KEY,
            name TEXT NOT NULL,
            price REAL
        );
        CREATE TABLE orders (
            id INTEGER PRIMARY KEY,
            customer_id INTEGER REFERENCES customers(id),
            product_id INTEGER REFERENCES products(id)
        );
        """
    )
    con.executemany(
        "INSERT INTO customers VALUES (?, ?, ?, ?)",
        [
            (1, "Ada Lovelace", "ada@example.org", "2023-01-15"),
            (2, "Alan Turing", "alan@example.org", "2023-02-01"),
            (3, "Grace Hopper", None, "2023-03-09"),
            (4, "Edsger Dijkstra", "ewd@example.org", "2023-03-30"),
        ],
    )
    con.executemany(
        "INSERT INTO products VALUES (?, ?, ?)",
        [
            (1, 'Pizza Stone 12"', 24.5),
            (2, "Cast Iron Pan", 39.0),
            (3, "Chef Knife\nDeluxe", 89.99),
        ],
    )
    con.executemany(
        "INSERT INTO orders VALUES (?, ?, ?)",
        [
            (1, 1, 2),
            (2, 1, 3),
            (3, 2, 1),
            (4, 3, 2),
            (5, 99, 1),  # dangling customer reference
        ],
    )
    con.commit()
    con.close()


def make_empty():
    con = fresh("empty")
    con.execute("PRAGMA user_version = 1")
    con.commit()
    con.close()


MANIFEST = [
    {
        "db_id": "shop",
        "table_names_original": ["customers", "products", "orders"],
        "table_names": ["customers", "products", "orders"],
        "column_names_original": [
            [-1, "*"],
            [0, "id"], [0, "name"], [0, "email"], [0, "signup_date"],
            [1, "id"], [1, "name"], [1, "price"],
            [2, "id"], [2, "customer_id"], [2, "product_id"],
        ],
        "column_names": [
            [-1, "*"],
            [0, "id"], [0, "name"], [0, "email"], [0, "signup date"],
            [1, "id"], [1, "name"], [1, "price"],
            [2, "id"], [2, "customer id"], [2, "product id"],
        ],
        "column_types": ["text", "number", "text", "text", "text", "number", "text", "number",
                         "number", "number", "number"],
        "primary_keys": [1, 5, 8],
        "foreign_keys": [[9, 1], [10, 5]],
    },
    {
        "db_id": "tiny_shop",
        "table_names_original": ["customers", "orders"],
        "table_names": ["customers", "orders"],
        "column_names_original": [[-1, "*"], [0, "id"], [1, "id"], [1, "customer_id"]],
        "column_names": [[-1, "*"], [0, "id"], [1, "id"], [1, "customer id"]],
        "column_types": ["text", "number", "number", "number"],
        "primary_keys": [1, 2],
        "foreign_keys": [[3, 1]],
    },
    {
        "db_id": "solo",
        "table_names_original": ["notes"],
        "table_names": ["notes"],
        "column_names_original": [[-1, "*"], [0, "note_id"], [0, "body"]],
        "column_names": [[-1, "*"], [0, "note id"], [0, "body"]],
        "column_types": ["text", "number", "text"],
        "primary_keys": [],
        "foreign_keys": [],
    },
    {
        "db_id": "empty",
        "table_names_original": [],
        "table_names": [],
        "column_names_original": [[-1, "*"]],
        "column_names": [[-1, "*"]],
        "column_types": ["text"],
        "primary_keys": [],
        "foreign_keys": [],
    },
]


def main():
    make_shop()
    make_empty()
    with open(os.path.join(HERE, "spider", "tables.json"), "w") as f:
        json.dump(MANIFEST, f, indent=1)
        f.write("\n")
    os.makedirs(os.path.join(HERE, "spider", "annotations"), exist_ok=True)
    with open(os.path.join(HERE, "spider", "annotations", "shop.json"), "w") as f:
        json.dump(
            {
                "tables": {
                    "customers": {
                        "description": "People who registered an account with the store.",
                        "columns": {"signup_date": "Day the account was created."},
                    }
                }
            },
            f,
            indent=1,
        )
        f.write("\n")


if __name__ == "__main__":
    main()
