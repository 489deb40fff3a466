from chaos_replica._entry import main

if __name__ == "__main__":
    raise SystemExit(main())
