if __name__ == '__main__':
    from radgait.main import main
    main()
